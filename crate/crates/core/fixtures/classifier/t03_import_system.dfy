import System

method Main() {
  var line := System.Console.ReadLine();
  print line;
}
