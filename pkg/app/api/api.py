from fastapi import APIRouter
from app.api.endpoints import distortion

api_router = APIRouter()

api_router.include_router(
    distortion.router,
    prefix="/distortion",
    tags=["distortion"],
)
