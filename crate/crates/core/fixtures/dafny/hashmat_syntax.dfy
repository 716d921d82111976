include "StdIn.dfy"

method Difference(a: int, b: int) returns (d: int)
  ensures d >= 0
  ensures d == a - b || d == b - a
{
  d := abs(a - b)
  return d;
}

method Main() {
  var xs := StdIn.ReadInts();
  var d := Difference(xs[0], xs[1]);
  print d, "\n";
}
