method Check(x: int)
{
  var y := x + 1;
  assert y > x + 1;
}
