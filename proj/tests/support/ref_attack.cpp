namespace refsupport {}
