// Small polymorphic hierarchy used as a real-binary fixture.
//   A, B, C, D : C, B (D also holds an A member)
//   S (abstract), T : S
//   X, Y : X, Z : Y
#include <cstdio>

__attribute__((noinline)) void sink(void* p) { asm volatile("" : : "r"(p) : "memory"); }

struct A {
  A() { sink(this); }
  virtual ~A() { sink(this); }
  virtual int fa() { return a0; }
  int a0 = 1;
};

struct B {
  B() { sink(this); }
  virtual ~B() { sink(this); }
  virtual int fb() { return b0; }
  long b0 = 2;
};

struct C {
  C() { sink(this); }
  virtual ~C() { sink(this); }
  virtual int fc() { return c0; }
  int c0 = 3;
};

struct D : C, B {
  D() { sink(this); }
  ~D() override { sink(this); }
  virtual int fd() { return d0 + a.fa(); }
  A a;
  int d0 = 4;
};

struct S {
  S() { sink(this); }
  virtual ~S() { sink(this); }
  virtual int area() = 0;
  virtual int sides() = 0;
  int s0 = 5;
};

struct T : S {
  T() { sink(this); }
  ~T() override { sink(this); }
  int area() override { return s0 * t0; }
  int sides() override { return 3; }
  long t0 = 6;
};

struct X {
  X() { sink(this); }
  virtual ~X() { sink(this); }
  virtual int fx() { return x0; }
  int x0 = 7;
};

struct Y : X {
  Y() { sink(this); }
  ~Y() override { sink(this); }
  virtual int fy() { return y0 + x0; }
  int y0 = 8;
};

struct Z : Y {
  Z() { sink(this); }
  ~Z() override { sink(this); }
  int fx() override { return z0; }
  double z0 = 9.0;
};

template <typename Obj>
__attribute__((noinline)) int use(Obj* o) {
  asm volatile("" : : "r"(o) : "memory");
  int r = static_cast<int>(sizeof(*o));
  delete o;
  return r;
}

int main() {
  int total = 0;
  total += use(new A);
  total += use(new B);
  total += use(new C);
  total += use(new D);
  total += use(new T);
  total += use(new X);
  total += use(new Y);
  total += use(new Z);
  std::printf("%d\n", total);
  return 0;
}
