// Reads every whitespace-separated integer on standard input.
module {:extern "StdIn"} StdIn {
  method {:extern "StdIn.__default", "ReadInts"} ReadInts() returns (xs: seq<int>)
}
