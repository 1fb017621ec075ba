//! Token vocabulary and the arithmetic problem type.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of answer / number tokens (the integers 1..=10).
pub const NUM_TOKENS: usize = 10;
/// Number of operator tokens.
pub const NUM_OPERATORS: usize = 2;
/// Largest operand the curriculum uses for addition.
pub const MAX_ADDEND: u8 = 5;
/// Largest "current number" a count-up query may carry (its answer is 10).
pub const MAX_COUNT_FROM: u8 = 9;

/// A number token in 1..=10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Number(u8);

impl Number {
    pub const MIN: Number = Number(1);
    pub const MAX: Number = Number(NUM_TOKENS as u8);

    pub fn new(value: u8) -> Result<Self> {
        if (1..=NUM_TOKENS as u8).contains(&value) {
            Ok(Number(value))
        } else {
            Err(Error::Input(format!("number token {value} outside 1..=10")))
        }
    }

    /// Builds a token from a zero-based vocabulary index.
    pub fn from_index(index: usize) -> Result<Self> {
        if index < NUM_TOKENS {
            Ok(Number(index as u8 + 1))
        } else {
            Err(Error::Input(format!("token index {index} outside 0..10")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based row in the embedding and answer tables.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all() -> impl Iterator<Item = Number> {
        (1..=NUM_TOKENS as u8).map(Number)
    }
}

impl TryFrom<u8> for Number {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Number::new(value)
    }
}

impl From<Number> for u8 {
    fn from(n: Number) -> u8 {
        n.0
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    CountUp,
    Add,
}

impl Operator {
    pub const ALL: [Operator; NUM_OPERATORS] = [Operator::CountUp, Operator::Add];

    pub fn index(self) -> usize {
        match self {
            Operator::CountUp => 0,
            Operator::Add => 1,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Operator::CountUp => '>',
            Operator::Add => '+',
        }
    }
}

/// One arithmetic item, `a op b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Problem {
    pub a: Number,
    pub op: Operator,
    pub b: Number,
}

impl Problem {
    pub fn new(a: u8, op: Operator, b: u8) -> Result<Self> {
        Ok(Problem {
            a: Number::new(a)?,
            op,
            b: Number::new(b)?,
        })
    }

    pub fn add(a: u8, b: u8) -> Result<Self> {
        Problem::new(a, Operator::Add, b)
    }

    /// The count-up query for the number after `current`; the context operand
    /// carries the previous number, `max(current - 1, 1)`.
    pub fn count_from(current: u8) -> Result<Self> {
        Problem::new(current.saturating_sub(1).max(1), Operator::CountUp, current)
    }

    pub fn is_addition(&self) -> bool {
        self.op == Operator::Add
    }

    /// The ground-truth answer: `a + b` for addition, `b + 1` for count-up.
    pub fn true_answer(&self) -> Result<Number> {
        let value = match self.op {
            Operator::Add => self.a.value() + self.b.value(),
            Operator::CountUp => self.b.value() + 1,
        };
        Number::new(value).map_err(|_| {
            Error::Domain(format!("answer {value} to {self} exceeds the vocabulary"))
        })
    }

    /// All 25 addition items with operands in 1..=5, in row-major order.
    pub fn all_additions() -> Vec<Problem> {
        let mut out = Vec::with_capacity(25);
        for a in 1..=MAX_ADDEND {
            for b in 1..=MAX_ADDEND {
                out.push(Problem::add(a, b).expect("operands in range"));
            }
        }
        out
    }

    /// All 9 count-up items, current number 1..=9.
    pub fn all_counts() -> Vec<Problem> {
        (1..=MAX_COUNT_FROM)
            .map(|b| Problem::count_from(b).expect("current in range"))
            .collect()
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.a, self.op.symbol(), self.b)
    }
}

/// Parses `"a+b"` (addition) or `"a>b"` (count-up). Errors name the offending
/// token.
impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (pos, op) = s
            .char_indices()
            .find_map(|(i, c)| match c {
                '+' => Some((i, Operator::Add)),
                '>' => Some((i, Operator::CountUp)),
                _ => None,
            })
            .ok_or_else(|| Error::Input(format!("no operator (`+` or `>`) in `{s}`")))?;
        let parse_operand = |tok: &str| -> Result<u8> {
            let tok = tok.trim();
            match tok.parse::<u8>() {
                Ok(v) if (1..=NUM_TOKENS as u8).contains(&v) => Ok(v),
                _ => Err(Error::Input(format!("bad operand `{tok}`"))),
            }
        };
        let a = parse_operand(&s[..pos])?;
        let b = parse_operand(&s[pos + 1..])?;
        Problem::new(a, op, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_bijective() {
        let tokens: Vec<_> = Number::all().collect();
        assert_eq!(tokens.len(), NUM_TOKENS);
        for (i, t) in tokens.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(Number::from_index(i).unwrap(), *t);
        }
        assert!(Number::new(0).is_err());
        assert!(Number::new(11).is_err());
        assert_eq!(Operator::ALL.len(), NUM_OPERATORS);
        assert_ne!(Operator::Add.index(), Operator::CountUp.index());
    }

    #[test]
    fn true_answers() {
        assert_eq!(Problem::add(3, 4).unwrap().true_answer().unwrap().value(), 7);
        let count = Problem::new(3, Operator::CountUp, 4).unwrap();
        assert_eq!(count.true_answer().unwrap().value(), 5);
        assert_eq!(Problem::add(1, 1).unwrap().true_answer().unwrap().value(), 2);
    }

    #[test]
    fn answer_overflow_is_a_domain_error() {
        let p = Problem::add(6, 5).unwrap();
        assert!(matches!(p.true_answer(), Err(Error::Domain(_))));
        let c = Problem::new(9, Operator::CountUp, 10).unwrap();
        assert!(matches!(c.true_answer(), Err(Error::Domain(_))));
    }

    #[test]
    fn count_from_uses_previous_number_as_context() {
        assert_eq!(Problem::count_from(1).unwrap().a.value(), 1);
        assert_eq!(Problem::count_from(4).unwrap().a.value(), 3);
    }

    #[test]
    fn parse_problem_strings() {
        assert_eq!("3+4".parse::<Problem>().unwrap(), Problem::add(3, 4).unwrap());
        assert_eq!(
            " 3 > 4 ".parse::<Problem>().unwrap(),
            Problem::new(3, Operator::CountUp, 4).unwrap()
        );
        let err = "4>?".parse::<Problem>().unwrap_err().to_string();
        assert!(err.contains('?'), "{err}");
        let err = "11+1".parse::<Problem>().unwrap_err().to_string();
        assert!(err.contains("11"), "{err}");
        assert!("34".parse::<Problem>().is_err());
    }

    #[test]
    fn enumerations() {
        assert_eq!(Problem::all_additions().len(), 25);
        assert_eq!(Problem::all_counts().len(), 9);
        assert_eq!(Problem::add(2, 5).unwrap().to_string(), "2+5");
    }
}
