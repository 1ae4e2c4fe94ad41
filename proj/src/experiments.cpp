// experiments: filled in later
