use std::sync::Arc;

use qtask_core::compiler::{compile, CompileOptions};
use qtask_core::vm::printf::{self, Args, FormatError};
use qtask_core::vm::{CycleCosts, Executor, Exit, Host, HostValue, Program, TaskMemory, Trap, Vm};

#[derive(Default)]
struct Mock {
    out: String,
    cycles: u64,
}

struct A<'a> {
    ints: &'a [u32],
    floats: &'a [f64],
    mem: &'a mut dyn TaskMemory,
}
impl Args for A<'_> {
    fn next_int(&mut self) -> Option<u32> {
        let (f, r) = self.ints.split_first()?;
        self.ints = r;
        Some(*f)
    }
    fn next_float(&mut self) -> Option<f64> {
        let (f, r) = self.floats.split_first()?;
        self.floats = r;
        Some(*f)
    }
    fn string(&mut self, h: u32, o: u32) -> Result<String, FormatError> {
        let mut s = Vec::new();
        loop {
            let mut b = [0u8];
            self.mem
                .read(h, o + s.len() as u32, &mut b)
                .map_err(|e| FormatError::BadString(e.to_string()))?;
            if b[0] == 0 {
                return Ok(String::from_utf8_lossy(&s).into());
            }
            s.push(b[0]);
        }
    }
}

impl Host for Mock {
    fn host_call(
        &mut self,
        id: u8,
        ints: &[u32],
        floats: &[f64],
        mem: &mut dyn TaskMemory,
    ) -> Result<HostValue, Trap> {
        match id {
            0 => {
                let fmt = A {
                    ints: &ints[..2],
                    floats: &[],
                    mem,
                }
                .string(ints[0], ints[1])
                .unwrap();
                let s = printf::format(
                    &fmt,
                    &mut A {
                        ints: &ints[2..],
                        floats,
                        mem,
                    },
                )
                .unwrap();
                self.out.push_str(&s);
                Ok(HostValue::Unit)
            }
            _ => Err(Trap::BadHostCall(id)),
        }
    }
    fn load(&mut self, _: u32, _: u32, _: &mut [u8]) -> Result<(), Trap> {
        Err(Trap::OutOfBounds("mock".into()))
    }
    fn store(&mut self, _: u32, _: u32, _: &[u8]) -> Result<(), Trap> {
        Err(Trap::OutOfBounds("mock".into()))
    }
    fn charge_cycles(&mut self, c: u64) {
        self.cycles += c;
    }
    fn should_yield(&mut self) -> bool {
        false
    }
}

fn run(src: &str, optimize: bool) -> (Exit, String) {
    let c = compile(src, CompileOptions { optimize }).unwrap_or_else(|d| panic!("{d:?}"));
    let p = Arc::new(Program::new(&c.bytecode).unwrap());
    let mut vm = Vm::new(p, CycleCosts::default(), 1 << 16);
    let mut h = Mock::default();
    let e = vm.run(&mut h);
    (e, h.out)
}

#[test]
fn smoke() {
    let src = r#"
const double PI = 3.14159;
int sq(int x) { return x * x; }
double half(double v) { return v / 2; }
int task_entry() {
    int a[5] = {1, 2, 3};
    iq_pair p = {3, -4};
    iq_pair *pp = &p;
    int s = 0;
    for (int i = 0; i < 5; i++) { s += a[i] * sq(i); if (i == 3) continue; }
    a[4] += 10;
    int k = 0;
    while (1) { k++; if (k > 6) break; }
    u32 u = 0xFFFFFFFFu;
    double d = half(PI) * 2;
    int *q = a + 1;
    q[1] *= 3;
    rtos_printf("s=%d k=%d u=%u d=%.3f a4=%d a2=%d pq=%d m=%d\n", s, k, u >> 28, d, a[4], *(q+1), pp->i + pp->q, -7 % 3);
    return s > 5 && k == 7 ? 42 : 1;
}
"#;
    for opt in [false, true] {
        let (e, out) = run(src, opt);
        assert_eq!(e, Exit::Returned(42), "{out}");
        assert_eq!(out, "s=14 k=7 u=15 d=3.142 a4=10 a2=9 pq=-1 m=-1\n");
    }
}
