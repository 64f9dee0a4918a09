def helper(v):
    raise OverflowError("too big: %d" % v)
helper(99)
