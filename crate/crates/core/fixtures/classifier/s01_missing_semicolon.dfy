method Twice(x: int) returns (y: int)
  ensures y == 2 * x
{
  y := 2 * x
}
