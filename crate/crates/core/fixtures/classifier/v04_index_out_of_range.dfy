method First(a: array<int>) returns (x: int)
{
  x := a[0];
}
