//! Spoken-form expansion of digit strings: cardinals, ordinals, decimals,
//! and the pairwise year reading used for four-digit numbers.

use thiserror::Error;

/// Digit string falls outside the supported patterns (leading zeros,
/// overflow, mixed garbage). Callers fall back to digit-by-digit reading.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unsupported number: {0:?}")]
pub struct UnsupportedNumber(pub String);

const UNITS: [&str; 20] = [
    "ZERO", "ONE", "TWO", "THREE", "FOUR", "FIVE", "SIX", "SEVEN", "EIGHT", "NINE", "TEN",
    "ELEVEN", "TWELVE", "THIRTEEN", "FOURTEEN", "FIFTEEN", "SIXTEEN", "SEVENTEEN", "EIGHTEEN",
    "NINETEEN",
];

const TENS: [&str; 10] = [
    "", "", "TWENTY", "THIRTY", "FORTY", "FIFTY", "SIXTY", "SEVENTY", "EIGHTY", "NINETY",
];

const SCALES: [(u64, &str); 6] = [
    (1_000_000_000_000_000_000, "QUINTILLION"),
    (1_000_000_000_000_000, "QUADRILLION"),
    (1_000_000_000_000, "TRILLION"),
    (1_000_000_000, "BILLION"),
    (1_000_000, "MILLION"),
    (1_000, "THOUSAND"),
];

fn push_below_thousand(n: u64, out: &mut Vec<String>) {
    debug_assert!(n > 0 && n < 1000);
    let (hundreds, rest) = (n / 100, n % 100);
    if hundreds > 0 {
        out.push(UNITS[hundreds as usize].to_string());
        out.push("HUNDRED".to_string());
    }
    if rest >= 20 {
        out.push(TENS[(rest / 10) as usize].to_string());
        if rest % 10 > 0 {
            out.push(UNITS[(rest % 10) as usize].to_string());
        }
    } else if rest > 0 {
        out.push(UNITS[rest as usize].to_string());
    }
}

/// Cardinal reading of an unsigned integer, e.g. 42 -> FORTY TWO.
pub fn cardinal(n: u64) -> Vec<String> {
    if n == 0 {
        return vec!["ZERO".to_string()];
    }
    let mut out = Vec::new();
    let mut rem = n;
    for (scale, name) in SCALES {
        if rem >= scale {
            push_below_thousand(rem / scale, &mut out);
            out.push(name.to_string());
            rem %= scale;
        }
    }
    if rem > 0 {
        push_below_thousand(rem, &mut out);
    }
    out
}

/// Year reading of a four-digit number: split into two-digit pairs
/// (1984 -> NINETEEN EIGHTY FOUR), with the usual special cases for
/// even hundreds (1900 -> NINETEEN HUNDRED), the X000..X009 block
/// (2005 -> TWO THOUSAND FIVE), and mid-century "oh" years
/// (1904 -> NINETEEN OH FOUR).
pub fn year(n: u64) -> Vec<String> {
    debug_assert!((1000..=9999).contains(&n));
    let (hi, lo) = (n / 100, n % 100);
    if hi % 10 == 0 && lo < 10 {
        // 2000, 2005: the pair reading degenerates to the cardinal one.
        return cardinal(n);
    }
    let mut out = cardinal(hi);
    match lo {
        0 => out.push("HUNDRED".to_string()),
        1..=9 => {
            out.push("OH".to_string());
            out.push(UNITS[lo as usize].to_string());
        }
        _ => out.extend(cardinal(lo)),
    }
    out
}

/// Ordinal reading: 1 -> FIRST, 22 -> TWENTY SECOND, 100 -> ONE HUNDREDTH.
pub fn ordinal(n: u64) -> Vec<String> {
    let mut words = cardinal(n);
    let last = words.pop().unwrap();
    words.push(match last.as_str() {
        "ONE" => "FIRST".to_string(),
        "TWO" => "SECOND".to_string(),
        "THREE" => "THIRD".to_string(),
        "FIVE" => "FIFTH".to_string(),
        "EIGHT" => "EIGHTH".to_string(),
        "NINE" => "NINTH".to_string(),
        "TWELVE" => "TWELFTH".to_string(),
        w if w.ends_with('Y') => format!("{}IETH", &w[..w.len() - 1]),
        w => format!("{w}TH"),
    });
    words
}

/// Digit-by-digit reading, the fallback for unsupported patterns.
pub fn digits(s: &str) -> Vec<String> {
    s.chars()
        .filter(|c| c.is_ascii_digit())
        .map(|c| UNITS[c.to_digit(10).unwrap() as usize].to_string())
        .collect()
}

fn parse_plain(s: &str) -> Result<u64, UnsupportedNumber> {
    if s.is_empty() || (s.len() > 1 && s.starts_with('0')) {
        return Err(UnsupportedNumber(s.to_string()));
    }
    s.parse().map_err(|_| UnsupportedNumber(s.to_string()))
}

/// Expands an integer, decimal, ordinal-suffixed, or four-digit year
/// digit string into spoken words. Bare four-digit integers in
/// 1000..=2999 take the year reading; everything else is cardinal.
pub fn expand_number(s: &str) -> Result<Vec<String>, UnsupportedNumber> {
    let err = || UnsupportedNumber(s.to_string());
    if s.is_empty() {
        return Err(err());
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let mut out = cardinal(parse_plain(int_part)?);
        out.push("POINT".to_string());
        out.extend(digits(frac_part));
        return Ok(out);
    }
    let lower = s.to_ascii_lowercase();
    for suffix in ["st", "nd", "rd", "th"] {
        if let Some(stem) = lower.strip_suffix(suffix) {
            if !stem.is_empty() && stem.bytes().all(|b| b.is_ascii_digit()) {
                return Ok(ordinal(parse_plain(stem)?));
            }
        }
    }
    if !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let n = parse_plain(s)?;
    if s.len() == 4 && (1000..=2999).contains(&n) {
        Ok(year(n))
    } else {
        Ok(cardinal(n))
    }
}
