include "StdIn.dfy"

method RelationalOperator(a: int, b: int) returns (result: char)
{
  result := '=';
}

method Main() {
  var xs := StdIn.ReadInts();
  if |xs| >= 2 {
    var r := RelationalOperator(xs[0], xs[1]);
    print r, "\n";
  }
}
