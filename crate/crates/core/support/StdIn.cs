// Extern implementation of the StdIn module declared in StdIn.dfy.
using System.Numerics;

namespace StdIn {
  public partial class __default {
    public static Dafny.ISequence<BigInteger> ReadInts() {
      var text = System.Console.In.ReadToEnd();
      var parts = text.Split((char[])null, System.StringSplitOptions.RemoveEmptyEntries);
      var values = new BigInteger[parts.Length];
      for (int i = 0; i < parts.Length; i++) {
        values[i] = BigInteger.Parse(parts[i]);
      }
      return Dafny.Sequence<BigInteger>.FromArray(values);
    }
  }
}
