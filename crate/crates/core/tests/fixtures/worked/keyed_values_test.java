@Test(timeout = 4000)
public void testKeyedValues() throws Throwable {
  KeyedValues kv = new KeyedValues();
  Short short0 = new Short(2);
  kv.insertValue(0, short0, 2);
  kv.removeValue(0);
  int int0 = kv.itemCount();
  // regression oracle observed on the buggy version
  assertEquals(1, int0);
}
