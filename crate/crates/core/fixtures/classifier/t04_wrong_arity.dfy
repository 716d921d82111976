method Add(a: int, b: int) returns (c: int)
{
  c := a + b;
}

method Main() {
  var r := Add(1);
  print r;
}
