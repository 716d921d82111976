include "StdIn.dfy"

function Quad(a: int, b: int, c: int, x: int): int
{
  a * x * x + b * x + c
}

// Number of x in [0, n) with Quad(x) divisible by d.
function CountUpTo(a: int, b: int, c: int, d: int, n: int): nat
  requires d > 0
  requires n >= 0
  decreases n
{
  if n == 0 then 0
  else CountUpTo(a, b, c, d, n - 1) + (if Quad(a, b, c, n - 1) % d == 0 then 1 else 0)
}

function Matches(a: int, b: int, c: int, d: int, n: int): set<int>
  requires d > 0
  requires n >= 0
{
  set x | 0 <= x < n && Quad(a, b, c, x) % d == 0
}

lemma CountMatchesSet(a: int, b: int, c: int, d: int, n: int)
  requires d > 0
  requires n >= 0
  ensures CountUpTo(a, b, c, d, n) == |Matches(a, b, c, d, n)|
  decreases n
{
  if n > 0 {
    CountMatchesSet(a, b, c, d, n - 1);
    var prev := Matches(a, b, c, d, n - 1);
    if Quad(a, b, c, n - 1) % d == 0 {
      assert Matches(a, b, c, d, n) == prev + {n - 1};
      assert n - 1 !in prev;
    } else {
      assert Matches(a, b, c, d, n) == prev;
    }
  }
}

method MagicFormula(a: int, b: int, c: int, d: int, L: int) returns (result: int)
  requires d > 0
  requires L >= 0
  ensures result == |set x | 0 <= x <= L && (a * x * x + b * x + c) % d == 0|
{
  result := 0;
  var x := 0;
  while x <= L
    invariant 0 <= x <= L + 1
    invariant result == CountUpTo(a, b, c, d, x)
  {
    if (a * x * x + b * x + c) % d == 0 {
      result := result + 1;
    }
    x := x + 1;
  }
  CountMatchesSet(a, b, c, d, L + 1);
  assert Matches(a, b, c, d, L + 1) == set x | 0 <= x <= L && (a * x * x + b * x + c) % d == 0;
}

method Main() {
  var xs := StdIn.ReadInts();
  if |xs| >= 5 && xs[3] > 0 && xs[4] >= 0 {
    var r := MagicFormula(xs[0], xs[1], xs[2], xs[3], xs[4]);
    print r, "\n";
  }
}
