SCALE = 2
