include "StdIn.dfy"

method RelationalOperator(a: int, b: int) returns (result: char)
  ensures a < b ==> result == '<'
  ensures a > b ==> result == '>'
  ensures a == b ==> result == '='
{
  if a < b:
    result := '<';
  elif a > b:
    result := '>';
  else:
    result := '=';
}

method Main() {
  var xs := StdIn.ReadInts();
  if |xs| >= 2 {
    var r := RelationalOperator(xs[0], xs[1]);
    print r, "\n";
  }
}
