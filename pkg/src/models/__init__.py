# Domain value types
