# Database module initialization
