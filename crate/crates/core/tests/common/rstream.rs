//! R's default generator (Mersenne-Twister, inversion normals), enough to
//! regenerate data sets produced after `set.seed(k)`.

use lmmfit::inference::dist::qnorm;

const N: usize = 624;
const M: usize = 397;

pub struct RStream {
    mt: [u32; N],
    mti: usize,
}

impl RStream {
    pub fn set_seed(seed: u32) -> Self {
        let mut s = seed;
        for _ in 0..50 {
            s = s.wrapping_mul(69069).wrapping_add(1);
        }
        // the first of R's 625 seed words holds the position
        s = s.wrapping_mul(69069).wrapping_add(1);
        let mut mt = [0u32; N];
        for v in mt.iter_mut() {
            s = s.wrapping_mul(69069).wrapping_add(1);
            *v = s;
        }
        Self { mt, mti: N }
    }

    fn next_u32(&mut self) -> u32 {
        const UPPER: u32 = 0x8000_0000;
        const LOWER: u32 = 0x7fff_ffff;
        let mag = |y: u32| if y & 1 == 1 { 0x9908_b0df } else { 0 };
        if self.mti >= N {
            for k in 0..N {
                let y = (self.mt[k] & UPPER) | (self.mt[(k + 1) % N] & LOWER);
                self.mt[k] = self.mt[(k + M) % N] ^ (y >> 1) ^ mag(y);
            }
            self.mti = 0;
        }
        let mut y = self.mt[self.mti];
        self.mti += 1;
        y ^= y >> 11;
        y ^= (y << 7) & 0x9d2c_5680;
        y ^= (y << 15) & 0xefc6_0000;
        y ^ (y >> 18)
    }

    pub fn unif(&mut self) -> f64 {
        let v = self.next_u32() as f64 * 2.328_306_436_538_696_3e-10;
        v.clamp(f64::EPSILON / 2.0, 1.0 - f64::EPSILON / 2.0)
    }

    pub fn rnorm(&mut self, n: usize) -> Vec<f64> {
        const BIG: f64 = 134_217_728.0;
        (0..n)
            .map(|_| {
                let u = (BIG * self.unif()).trunc() + self.unif();
                qnorm(u / BIG)
            })
            .collect()
    }
}
