# Configuration, logging and run tracking
