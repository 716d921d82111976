method Sign(x: int) returns (s: int)
{
  if x < 0:
    s := -1;
  else:
    s := 1;
}
