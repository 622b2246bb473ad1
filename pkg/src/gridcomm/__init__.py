"""Emergency control of a DC power grid under partial communication loss."""
