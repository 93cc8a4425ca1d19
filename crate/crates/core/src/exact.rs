//! Exact sign of short sums of `f64` terms, using floating-point
//! expansions. Geometry predicates built on this agree with rational
//! arithmetic over the same inputs.

use std::cmp::Ordering;

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bv = s - a;
    let av = s - bv;
    (s, (a - av) + (b - bv))
}

const MAX_PARTS: usize = 16;

/// Non-overlapping expansion, smallest component first, zeros dropped.
/// Holds sums of up to 16 terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sum {
    parts: [f64; MAX_PARTS],
    len: usize,
}

impl Default for Sum {
    fn default() -> Self {
        Sum {
            parts: [0.0; MAX_PARTS],
            len: 0,
        }
    }
}

impl Sum {
    pub fn of(terms: &[f64]) -> Self {
        let mut s = Sum::default();
        for &t in terms {
            s.add(t);
        }
        s
    }

    pub fn add(&mut self, b: f64) {
        let mut q = b;
        let mut n = 0;
        for i in 0..self.len {
            let (s, h) = two_sum(q, self.parts[i]);
            if h != 0.0 {
                self.parts[n] = h;
                n += 1;
            }
            q = s;
        }
        if q != 0.0 {
            assert!(n < MAX_PARTS, "expansion too long");
            self.parts[n] = q;
            n += 1;
        }
        self.len = n;
    }

    pub fn sign(&self) -> Ordering {
        match self.len {
            0 => Ordering::Equal,
            n => self.parts[n - 1].partial_cmp(&0.0).expect("finite terms"),
        }
    }

    /// Nearest-ish `f64` to the exact sum.
    pub fn value(&self) -> f64 {
        self.parts[..self.len].iter().sum()
    }
}

/// Sign of `Σa − Σb`.
pub fn cmp(a: &[f64], b: &[f64]) -> Ordering {
    let mut s = Sum::of(a);
    for &t in b {
        s.add(-t);
    }
    s.sign()
}

/// `Σa − Σb` rounded.
pub fn diff(a: &[f64], b: &[f64]) -> f64 {
    let mut s = Sum::of(a);
    for &t in b {
        s.add(-t);
    }
    s.value()
}

fn order_key(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    b ^ (((b >> 63) as u64) >> 1) as i64
}

fn from_key(k: i64) -> f64 {
    f64::from_bits((k ^ (((k >> 63) as u64) >> 1) as i64) as u64)
}

/// Smallest finite `f64` satisfying `ok`, which must be monotone (false
/// below some threshold, true from it on). `guess` only speeds things up.
pub fn least_f64(guess: f64, ok: impl Fn(f64) -> bool) -> f64 {
    let min = order_key(f64::MIN);
    let max = order_key(f64::MAX);
    let g = order_key(guess).clamp(min, max);
    // bracket with `lo` failing and `hi` passing, then bisect keys
    let (mut lo, mut hi);
    let mut step: i64 = 1;
    if ok(from_key(g)) {
        hi = g;
        loop {
            lo = hi.saturating_sub(step).max(min);
            if !ok(from_key(lo)) {
                break;
            }
            if lo == min {
                return f64::MIN;
            }
            hi = lo;
            step = step.saturating_mul(2);
        }
    } else {
        lo = g;
        loop {
            hi = lo.saturating_add(step).min(max);
            if ok(from_key(hi)) {
                break;
            }
            assert!(hi < max, "predicate never holds");
            lo = hi;
            step = step.saturating_mul(2);
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(from_key(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    from_key(hi)
}

/// Largest finite `f64` satisfying `ok`, monotone the other way.
pub fn greatest_f64(guess: f64, ok: impl Fn(f64) -> bool) -> f64 {
    -least_f64(-guess, |x| ok(-x))
}

/// Axis-aligned rectangle whose edges are exact sums of three terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub l: [f64; 3],
    pub r: [f64; 3],
    pub b: [f64; 3],
    pub t: [f64; 3],
}

impl Rect {
    /// Box of centre `(cx, cy)` and size `(w + m) × (h + m)`.
    pub fn centered(cx: f64, cy: f64, w: f64, h: f64, m: f64) -> Self {
        Rect {
            l: [cx, -w / 2.0, -m / 2.0],
            r: [cx, w / 2.0, m / 2.0],
            b: [cy, -h / 2.0, -m / 2.0],
            t: [cy, h / 2.0, m / 2.0],
        }
    }

    pub fn from_edges(l: f64, b: f64, r: f64, t: f64) -> Self {
        Rect {
            l: [l, 0.0, 0.0],
            r: [r, 0.0, 0.0],
            b: [b, 0.0, 0.0],
            t: [t, 0.0, 0.0],
        }
    }

    fn span(lo_a: &[f64; 3], hi_a: &[f64; 3], lo_b: &[f64; 3], hi_b: &[f64; 3]) -> Option<f64> {
        if cmp(hi_a, lo_b) != Ordering::Greater || cmp(hi_b, lo_a) != Ordering::Greater {
            return None;
        }
        let hi = if cmp(hi_a, hi_b) == Ordering::Less {
            hi_a
        } else {
            hi_b
        };
        let lo = if cmp(lo_a, lo_b) == Ordering::Greater {
            lo_a
        } else {
            lo_b
        };
        Some(diff(hi, lo))
    }

    /// Overlap area when it is positive.
    pub fn overlap_area(&self, o: &Rect) -> Option<f64> {
        let x = Self::span(&self.l, &self.r, &o.l, &o.r)?;
        let y = Self::span(&self.b, &self.t, &o.b, &o.t)?;
        Some(x * y)
    }

    pub fn within(&self, o: &Rect) -> bool {
        cmp(&self.l, &o.l) != Ordering::Less
            && cmp(&self.r, &o.r) != Ordering::Greater
            && cmp(&self.b, &o.b) != Ordering::Less
            && cmp(&self.t, &o.t) != Ordering::Greater
    }
}
