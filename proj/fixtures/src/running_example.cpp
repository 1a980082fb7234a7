// The running example: D : C, B with a composed A. The switch gives the
// binary a jump table in .rodata.
#include <cstdio>

struct A {
  virtual ~A() {}
  int a = 1;
};
struct B {
  virtual ~B() {}
  virtual int fb() { return b; }
  int b = 2;
};
struct C {
  virtual ~C() {}
  virtual int fc() { return c; }
  int c = 3;
};
struct D : C, B {
  int fc() override { return d; }
  A member;
  int d = 4;
};

__attribute__((noinline)) int pick(int k) {
  switch (k) {
    case 0: return 11;
    case 1: return 27;
    case 2: return 5;
    case 3: return 91;
    case 4: return 42;
    case 5: return 3;
    case 6: return 77;
    default: return -1;
  }
}

int main(int argc, char**) {
  D* d = new D;
  int r = d->fc() + d->fb() + pick(argc);
  delete d;
  std::printf("%d\n", r);
  return 0;
}
