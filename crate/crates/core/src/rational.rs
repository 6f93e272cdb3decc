//! Exact rational arithmetic helpers.
//!
//! Every density in the crate is an exact `Ratio<i128>`. Serialized forms are
//! always `"p/q"` strings so reports stay bit-stable across platforms.

use num_rational::Ratio;
use num_traits::{One, Zero};

pub type Rational = Ratio<i128>;

/// `num / den` as an exact rational. `den` must be nonzero.
pub fn ratio(num: u64, den: u64) -> Rational {
    Rational::new(num as i128, den as i128)
}

/// `2^-k` for `k < 126`.
pub fn pow2_recip(k: u32) -> Rational {
    assert!(k < 126, "2^-{k} is not representable");
    Rational::new(1, 1i128 << k)
}

/// `1 - 2^-k`.
pub fn one_minus_pow2_recip(k: u32) -> Rational {
    Rational::one() - pow2_recip(k)
}

pub fn to_p_q(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_p_q(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: i128 = p.trim().parse().ok()?;
            let q: i128 = q.trim().parse().ok()?;
            if q == 0 {
                return None;
            }
            Some(Rational::new(p, q))
        }
        None => s.parse::<i128>().ok().map(Rational::from_integer),
    }
}

/// Lossy conversion for logging and CSV plotting columns.
pub fn to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn is_unit_interval(r: &Rational) -> bool {
    *r >= Rational::zero() && *r <= Rational::one()
}

/// True if the denominator (in lowest terms) is a power of two.
pub fn is_dyadic(r: &Rational) -> bool {
    let d = *r.denom();
    d > 0 && d & (d - 1) == 0
}

pub mod serde_p_q {
    use super::*;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_p_q(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_p_q(&s).ok_or_else(|| D::Error::custom(format!("not a rational: {s:?}")))
    }
}

pub mod serde_p_q_vec {
    use super::*;
    use serde::{de::Error, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for r in v {
            seq.serialize_element(&to_p_q(r))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| parse_p_q(s).ok_or_else(|| D::Error::custom(format!("not a rational: {s:?}"))))
            .collect()
    }
}

pub mod serde_p_q_opt {
    use super::*;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_some(&to_p_q(r)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        let v = Option::<String>::deserialize(d)?;
        v.map(|s| parse_p_q(&s).ok_or_else(|| D::Error::custom(format!("not a rational: {s:?}"))))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_q_round_trip() {
        let r = ratio(6, 8);
        assert_eq!(to_p_q(&r), "3/4");
        assert_eq!(parse_p_q("3/4"), Some(r));
        assert_eq!(parse_p_q("2"), Some(Rational::from_integer(2)));
        assert_eq!(parse_p_q("1/0"), None);
    }

    #[test]
    fn dyadic_detection() {
        assert!(is_dyadic(&ratio(3, 8)));
        assert!(is_dyadic(&ratio(6, 12)));
        assert!(!is_dyadic(&ratio(1, 3)));
    }
}
