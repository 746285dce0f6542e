//! Linear algebra over GF(2) for maps `GF(2)^n -> GF(2)^b` with `n, b <= 64`.
//! A map is given by its columns; vectors are bit masks.

/// `sum_i x_i cols[i]`.
#[inline]
pub fn apply(cols: &[u64], x: u64) -> u64 {
    let mut acc = 0;
    let mut rest = x;
    while rest != 0 {
        let i = rest.trailing_zeros() as usize;
        acc ^= cols[i];
        rest &= rest - 1;
    }
    acc
}

/// Echelon form of the column space. Slot `p` holds a vector whose highest
/// set bit is `p`, with the combination of columns producing it.
struct Basis {
    slots: [Option<(u64, u64)>; 64],
    nullspace: Vec<u64>,
}

impl Basis {
    fn new(cols: &[u64]) -> Self {
        assert!(cols.len() <= 64, "at most 64 columns");
        let mut b = Basis {
            slots: [None; 64],
            nullspace: Vec::new(),
        };
        for (i, &c) in cols.iter().enumerate() {
            let (v, comb) = b.reduce(c, 1 << i);
            if v == 0 {
                b.nullspace.push(comb);
            } else {
                b.slots[63 - v.leading_zeros() as usize] = Some((v, comb));
            }
        }
        b
    }

    /// Clears leading bits of `v` while a pivot exists for them.
    fn reduce(&self, mut v: u64, mut comb: u64) -> (u64, u64) {
        while v != 0 {
            let p = 63 - v.leading_zeros() as usize;
            match self.slots[p] {
                Some((w, c)) => {
                    v ^= w;
                    comb ^= c;
                }
                None => break,
            }
        }
        (v, comb)
    }
}

/// Every solution of `apply(cols, x) = target` is `particular` plus a
/// combination of `nullspace`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub particular: u64,
    pub nullspace: Vec<u64>,
}

pub fn solve(cols: &[u64], target: u64) -> Option<Solution> {
    let b = Basis::new(cols);
    let (rest, comb) = b.reduce(target, 0);
    (rest == 0).then(|| Solution {
        particular: comb,
        nullspace: b.nullspace,
    })
}

pub fn rank(cols: &[u64]) -> usize {
    cols.len() - Basis::new(cols).nullspace.len()
}

impl Solution {
    /// All `2^k` solutions in Gray-code order, starting with `particular`.
    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        let k = self.nullspace.len();
        assert!(k < 64, "solution space too large to enumerate");
        let mut x = self.particular;
        (0u64..1 << k).map(move |i| {
            if i > 0 {
                x ^= self.nullspace[i.trailing_zeros() as usize];
            }
            x
        })
    }

    pub fn dimension(&self) -> usize {
        self.nullspace.len()
    }
}
