method Label() returns (s: string)
{
  s := 42;
}
