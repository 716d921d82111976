method Copy(x: int) returns (y: int)
  ensures y == x
{
  y := z;
}
