function Down(n: int): int
{
  if n == 0 then 0 else Down(n - 1)
}
