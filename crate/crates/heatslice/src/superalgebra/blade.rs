//! Multi-indices I ⊆ {1..m} stored as bitmasks (bit i-1 set when i ∈ I).

pub type Blade = u32;

pub const MAX_GENERATORS: usize = 20;

pub fn grade(b: Blade) -> u32 {
    b.count_ones()
}

pub fn full(m: usize) -> Blade {
    if m == 0 {
        0
    } else {
        (1u32 << m) - 1
    }
}

/// Number of transpositions needed to merge `a` followed by `b` into sorted order.
fn merge_swaps(a: Blade, b: Blade) -> u32 {
    let mut swaps = 0;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    swaps
}

fn parity(n: u32) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// e_a ∧ e_b = sign · e_{a∪b}, or `None` when they overlap.
pub fn wedge_sign(a: Blade, b: Blade) -> Option<f64> {
    if a & b != 0 {
        None
    } else {
        Some(parity(merge_swaps(a, b)))
    }
}

/// Clifford product of orthonormal blades with e_i·e_i = -1.
pub fn clifford_sign(a: Blade, b: Blade) -> f64 {
    parity(merge_swaps(a, b) + (a & b).count_ones())
}

/// Sign picked up when generator `i` (0-based) moves past the generators of `b` below it.
pub fn sign_below(b: Blade, i: usize) -> f64 {
    parity((b & ((1u32 << i) - 1)).count_ones())
}

/// Indices (1-based) in increasing order.
pub fn indices(b: Blade) -> Vec<usize> {
    (0..32).filter(|i| b & (1 << i) != 0).map(|i| i as usize + 1).collect()
}

pub fn from_indices(idx: &[usize]) -> Blade {
    idx.iter().fold(0, |b, &i| b | (1 << (i - 1)))
}

/// Text label: 1-based indices concatenated ("12"), comma-separated when m > 9, "0" for ∅.
pub fn label(b: Blade, m: usize) -> String {
    let idx = indices(b);
    if idx.is_empty() {
        return "0".into();
    }
    let parts: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
    if m > 9 {
        parts.join(",")
    } else {
        parts.concat()
    }
}

pub fn parse_label(s: &str, m: usize) -> Option<Blade> {
    if s == "0" {
        return Some(0);
    }
    let idx: Option<Vec<usize>> = if s.contains(',') || m > 9 {
        s.split(',').map(|p| p.trim().parse().ok()).collect()
    } else {
        s.chars().map(|c| c.to_digit(10).map(|d| d as usize)).collect()
    };
    let idx = idx?;
    if idx.iter().any(|&i| i == 0 || i > m) || idx.windows(2).any(|w| w[0] >= w[1]) {
        return None;
    }
    Some(from_indices(&idx))
}

/// All blades of Λℝ^m in lexicographic order of their index tuples.
pub fn lexicographic(m: usize) -> Vec<Blade> {
    let mut all: Vec<Blade> = (0..(1u32 << m)).collect();
    all.sort_by_key(|&b| indices(b));
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wedge_signs() {
        assert_eq!(wedge_sign(0b01, 0b10), Some(1.0));
        assert_eq!(wedge_sign(0b10, 0b01), Some(-1.0));
        assert_eq!(wedge_sign(0b11, 0b01), None);
        // e2 ∧ e13 = -e123
        assert_eq!(wedge_sign(0b010, 0b101), Some(-1.0));
    }

    #[test]
    fn clifford_squares() {
        assert_eq!(clifford_sign(1, 1), -1.0);
        // (e1 e2)^2 = -1
        assert_eq!(clifford_sign(0b11, 0b11), -1.0);
    }

    #[test]
    fn labels_round_trip() {
        for m in [3, 11] {
            for b in 0..(1u32 << m) {
                assert_eq!(parse_label(&label(b, m), m), Some(b));
            }
        }
        assert_eq!(label(0b101, 3), "13");
        assert_eq!(parse_label("31", 3), None);
    }

    #[test]
    fn lexicographic_order() {
        let order: Vec<String> = lexicographic(3).iter().map(|&b| label(b, 3)).collect();
        assert_eq!(order, ["0", "1", "12", "123", "13", "2", "23", "3"]);
    }
}
