method Sum(n: nat) returns (s: int)
{
  s := 0;
  for i in range(n) {
    s := s + i;
  }
}
