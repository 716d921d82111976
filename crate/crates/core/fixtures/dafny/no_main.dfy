method Difference(a: int, b: int) returns (d: int)
  ensures d >= 0
  ensures d == a - b || d == b - a
{
  if a >= b {
    d := a - b;
  } else {
    d := b - a;
  }
}
