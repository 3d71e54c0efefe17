//! Periodic points of the cat map: #Fix(Aⁿ) = |det(Aⁿ - I)| and the points themselves.

use crate::error::{KatokError, Result};
use crate::params::TorusPoint;

/// Largest n with λⁿ below 2^126.
pub const MAX_PERIOD: u32 = 90;

fn a_power(n: u32) -> [[i128; 2]; 2] {
    let mut m = [[1i128, 0], [0, 1]];
    for _ in 0..n {
        m = [
            [2 * m[0][0] + m[1][0], 2 * m[0][1] + m[1][1]],
            [m[0][0] + m[1][0], m[0][1] + m[1][1]],
        ];
    }
    m
}

fn check_period(n: u32) -> Result<()> {
    if n == 0 || n > MAX_PERIOD {
        return Err(KatokError::InvalidParams(format!(
            "period {n} outside 1..={MAX_PERIOD}"
        )));
    }
    Ok(())
}

/// λⁿ + λ⁻ⁿ - 2 = tr Aⁿ - 2.
pub fn fixed_point_count(n: u32) -> Result<u128> {
    check_period(n)?;
    let m = a_power(n);
    Ok((m[0][0] + m[1][1] - 2) as u128)
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        (a.abs(), a.signum(), 0)
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

/// Fix(Aⁿ) as exact fractions: (den, numerators) with every point equal to num / den.
pub fn periodic_numerators(n: u32) -> Result<(i128, Vec<[i128; 2]>)> {
    check_period(n)?;
    let mut d = a_power(n);
    d[0][0] -= 1;
    d[1][1] -= 1;
    let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
    // column operations bring the lattice D Z² to lower-triangular form [[g, 0], [x, y]]
    let (g, u, v) = ext_gcd(d[0][0], d[0][1]);
    let y = (-d[0][1] / g) * d[1][0] + (d[0][0] / g) * d[1][1];
    let (h11, h22) = (g.unsigned_abs(), y.unsigned_abs());
    debug_assert_eq!(h11 * h22, det.unsigned_abs());
    debug_assert_eq!(u * d[0][0] + v * d[0][1], g);
    let count = h11 * h22;
    if count > 50_000_000 {
        return Err(KatokError::InvalidParams(format!(
            "{count} periodic points is too many to list"
        )));
    }
    let den = det.abs();
    let s = det.signum();
    let mut out = Vec::with_capacity(count as usize);
    for i in 0..h11 as i128 {
        for j in 0..h22 as i128 {
            // D⁻¹ k = adj(D) k / det for coset representatives k
            let nx = (s * (d[1][1] * i - d[0][1] * j)).rem_euclid(den);
            let ny = (s * (-d[1][0] * i + d[0][0] * j)).rem_euclid(den);
            out.push([nx, ny]);
        }
    }
    Ok((den, out))
}

/// All points of Fix(Aⁿ) in [0,1)².
pub fn periodic_points(n: u32) -> Result<Vec<TorusPoint>> {
    let (den, nums) = periodic_numerators(n)?;
    Ok(nums
        .iter()
        .map(|k| TorusPoint::new(k[0] as f64 / den as f64, k[1] as f64 / den as f64))
        .collect())
}

/// Orbits of A on Fix(Aⁿ) with minimal period exactly `n`, each listed along the orbit.
pub fn primitive_orbits(n: u32) -> Result<Vec<Vec<TorusPoint>>> {
    let (den, nums) = periodic_numerators(n)?;
    let mut seen = std::collections::HashSet::with_capacity(nums.len());
    let mut out = Vec::new();
    for &k in &nums {
        if seen.contains(&k) {
            continue;
        }
        let mut orbit = vec![k];
        let mut c = k;
        loop {
            c = [(2 * c[0] + c[1]) % den, (c[0] + c[1]) % den];
            if c == k {
                break;
            }
            orbit.push(c);
        }
        seen.extend(orbit.iter().copied());
        if orbit.len() == n as usize {
            out.push(
                orbit
                    .iter()
                    .map(|k| TorusPoint::new(k[0] as f64 / den as f64, k[1] as f64 / den as f64))
                    .collect(),
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_counts() {
        assert_eq!(fixed_point_count(1).unwrap(), 1);
        assert_eq!(fixed_point_count(2).unwrap(), 5);
        assert_eq!(fixed_point_count(3).unwrap(), 16);
        assert!(fixed_point_count(0).is_err());
    }

    #[test]
    fn listed_points_are_distinct_and_periodic() {
        for n in 1..=6 {
            let pts = periodic_points(n).unwrap();
            assert_eq!(pts.len() as u128, fixed_point_count(n).unwrap());
            let mut keys: Vec<(i64, i64)> = pts
                .iter()
                .map(|p| ((p.x * 1e9).round() as i64, (p.y * 1e9).round() as i64))
                .collect();
            keys.sort();
            keys.dedup();
            assert_eq!(keys.len(), pts.len());
        }
    }

    #[test]
    fn primitive_orbits_partition_the_fixed_points() {
        for n in 1..=8u32 {
            let total: usize = (1..=n)
                .filter(|d| n % d == 0)
                .map(|d| primitive_orbits(d).unwrap().len() * d as usize)
                .sum();
            assert_eq!(total as u128, fixed_point_count(n).unwrap());
        }
        assert_eq!(primitive_orbits(1).unwrap(), vec![vec![TorusPoint::ORIGIN]]);
    }
}
