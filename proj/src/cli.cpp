// cli: filled in later
