//! Reaction-schema text format and polarity strings.
//!
//! A schema lists one reaction per line in chemical-equation form:
//!
//! ```text
//! X1+6X2 -> 7X2
//! 2X1+5X2 -> X1+6X2
//! 3X1+4X2 -> 4X1+3X2
//! ```
//!
//! A coefficient of one is written as the bare species and a coefficient of
//! zero by omitting the species. Both `->` and `→` are accepted as the arrow;
//! lines starting with `#` and blank lines are skipped.

use std::fmt;

use thiserror::Error;

use crate::model::{ModelError, RulePolarity, RuleSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: coefficients sum to {found}, expected {expected}")]
    Arity {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: arity {group_size} is not an odd group size of at least 3")]
    OddArity { line: usize, group_size: usize },
    #[error("line {line}: X1 count changes by {delta}, exactly one agent must flip")]
    Step { line: usize, delta: i64 },
    #[error("line {line}: unanimous composition {lhs_x1}X1 has no rule")]
    Unanimous { line: usize, lhs_x1: usize },
    #[error("line {line}: composition with {lhs_x1} X1 agents already defined on line {first}")]
    DuplicateComposition {
        line: usize,
        first: usize,
        lhs_x1: usize,
    },
    #[error("schema is missing rules for X1 counts {missing:?}")]
    MissingComposition { missing: Vec<usize> },
    #[error("rules for {k} and {mirror} X1 agents imply different polarities")]
    Asymmetry { k: usize, mirror: usize },
    #[error("schema contains no reactions")]
    Empty,
    #[error("polarity string {label:?} has length {found}, expected {expected} for group size {group_size}")]
    PolarityLength {
        label: String,
        group_size: usize,
        expected: usize,
        found: usize,
    },
    #[error("polarity string {label:?}: invalid character {found:?} at position {position}, expected 'M' or 'm'")]
    PolarityChar {
        label: String,
        found: char,
        position: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One group transition `a X1 + b X2 -> c X1 + d X2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Reaction {
    pub lhs_x1: usize,
    pub lhs_x2: usize,
    pub rhs_x1: usize,
    pub rhs_x2: usize,
}

impl Reaction {
    pub fn group_size(&self) -> usize {
        self.lhs_x1 + self.lhs_x2
    }

    /// Polarity implied by the direction of the flip: a rule that shrinks
    /// the group minority is a majority rule.
    pub fn polarity(&self) -> RulePolarity {
        let grows_x1 = self.rhs_x1 > self.lhs_x1;
        let x1_majority = 2 * self.lhs_x1 > self.group_size();
        if grows_x1 == x1_majority {
            RulePolarity::Majority
        } else {
            RulePolarity::Minority
        }
    }

    fn for_composition(k: usize, group_size: usize, polarity: RulePolarity) -> Self {
        let toward_x1 = (2 * k > group_size) == (polarity == RulePolarity::Majority);
        let rhs_x1 = if toward_x1 { k + 1 } else { k - 1 };
        Reaction {
            lhs_x1: k,
            lhs_x2: group_size - k,
            rhs_x1,
            rhs_x2: group_size - rhs_x1,
        }
    }
}

fn write_side(f: &mut fmt::Formatter<'_>, x1: usize, x2: usize) -> fmt::Result {
    let term = |n: usize, species: &str| match n {
        0 => None,
        1 => Some(species.to_string()),
        n => Some(format!("{n}{species}")),
    };
    let terms: Vec<String> = [term(x1, "X1"), term(x2, "X2")]
        .into_iter()
        .flatten()
        .collect();
    f.write_str(&terms.join("+"))
}

impl fmt::Display for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_side(f, self.lhs_x1, self.lhs_x2)?;
        f.write_str(" -> ")?;
        write_side(f, self.rhs_x1, self.rhs_x2)
    }
}

/// A validated schema: `G - 1` reactions, one per mixed composition,
/// stored in ascending order of the left-hand X1 count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactionSchema {
    group_size: usize,
    reactions: Vec<Reaction>,
}

impl ReactionSchema {
    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    /// Canonical text, one reaction per line, each line newline-terminated.
    pub fn to_text(&self) -> String {
        self.reactions.iter().map(|r| format!("{r}\n")).collect()
    }
}

impl fmt::Display for ReactionSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

struct Cursor<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    line: usize,
    text: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        Self {
            chars: text.char_indices().collect(),
            pos: 0,
            line,
            text,
        }
    }

    fn column(&self) -> usize {
        // 1-based, counted in characters
        self.pos + 1
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn error(&self, message: impl Into<String>) -> SchemaError {
        SchemaError::Syntax {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        let start = match self.chars.get(self.pos) {
            Some(&(i, _)) => i,
            None => return false,
        };
        if self.text[start..].starts_with(s) {
            self.pos += s.chars().count();
            true
        } else {
            false
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn coefficient(&mut self) -> Result<usize, SchemaError> {
        let start = self.pos;
        let mut value: usize = 0;
        while let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
            if self.pos == start && d == 0 {
                return Err(self.error("coefficient must not start with 0"));
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(d as usize))
                .ok_or_else(|| self.error("coefficient too large"))?;
            self.pos += 1;
        }
        Ok(if self.pos == start { 1 } else { value })
    }

    /// `term := [1-9][0-9]* species | species`
    fn term(&mut self) -> Result<(usize, bool), SchemaError> {
        self.skip_ws();
        let coefficient = self.coefficient()?;
        if self.eat("X1") {
            Ok((coefficient, true))
        } else if self.eat("X2") {
            Ok((coefficient, false))
        } else {
            Err(self.error("expected species X1 or X2"))
        }
    }

    /// `side := term ("+" term)?`, returns `(x1, x2)` coefficients.
    fn side(&mut self) -> Result<(usize, usize), SchemaError> {
        let mut counts = [None, None];
        let (c, is_x1) = self.term()?;
        counts[usize::from(!is_x1)] = Some(c);
        self.skip_ws();
        if self.eat("+") {
            let column = self.column();
            let (c, is_x1) = self.term()?;
            let slot = &mut counts[usize::from(!is_x1)];
            if slot.is_some() {
                return Err(SchemaError::Syntax {
                    line: self.line,
                    column,
                    message: "species repeated on one side".into(),
                });
            }
            *slot = Some(c);
        }
        Ok((counts[0].unwrap_or(0), counts[1].unwrap_or(0)))
    }

    fn reaction(&mut self) -> Result<Reaction, SchemaError> {
        let (lhs_x1, lhs_x2) = self.side()?;
        self.skip_ws();
        if !(self.eat("->") || self.eat("→")) {
            return Err(self.error("expected '->' or '→'"));
        }
        let (rhs_x1, rhs_x2) = self.side()?;
        self.skip_ws();
        if !self.at_end() {
            return Err(self.error("unexpected trailing input"));
        }
        Ok(Reaction {
            lhs_x1,
            lhs_x2,
            rhs_x1,
            rhs_x2,
        })
    }
}

/// Parses and validates schema text.
pub fn parse_schema(text: &str) -> Result<ReactionSchema, SchemaError> {
    let mut group_size = None;
    let mut by_k: Vec<Option<(usize, Reaction)>> = Vec::new();

    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let reaction = Cursor::new(raw, line).reaction()?;

        let g = *group_size.get_or_insert_with(|| reaction.group_size());
        if by_k.is_empty() {
            if g < 3 || g % 2 == 0 {
                return Err(SchemaError::OddArity {
                    line,
                    group_size: g,
                });
            }
            by_k = vec![None; g + 1];
        }
        for found in [
            reaction.lhs_x1 + reaction.lhs_x2,
            reaction.rhs_x1 + reaction.rhs_x2,
        ] {
            if found != g {
                return Err(SchemaError::Arity {
                    line,
                    expected: g,
                    found,
                });
            }
        }
        let delta = reaction.rhs_x1 as i64 - reaction.lhs_x1 as i64;
        if delta.abs() != 1 {
            return Err(SchemaError::Step { line, delta });
        }
        let k = reaction.lhs_x1;
        if k == 0 || k == g {
            return Err(SchemaError::Unanimous { line, lhs_x1: k });
        }
        if let Some((first, _)) = by_k[k] {
            return Err(SchemaError::DuplicateComposition {
                line,
                first,
                lhs_x1: k,
            });
        }
        by_k[k] = Some((line, reaction));
    }

    let group_size = group_size.ok_or(SchemaError::Empty)?;
    let missing: Vec<usize> = (1..group_size).filter(|&k| by_k[k].is_none()).collect();
    if !missing.is_empty() {
        return Err(SchemaError::MissingComposition { missing });
    }
    let reactions: Vec<Reaction> = by_k[1..group_size]
        .iter()
        .map(|slot| slot.expect("all compositions present").1)
        .collect();
    for k in 1..=(group_size - 1) / 2 {
        let mirror = group_size - k;
        if reactions[k - 1].polarity() != reactions[mirror - 1].polarity() {
            return Err(SchemaError::Asymmetry { k, mirror });
        }
    }
    Ok(ReactionSchema {
        group_size,
        reactions,
    })
}

pub fn ruleset_of_schema(schema: &ReactionSchema) -> RuleSet {
    let g = schema.group_size;
    let polarities = (1..=(g - 1) / 2)
        .map(|m| schema.reactions[m - 1].polarity())
        .collect();
    RuleSet::new(g, polarities).expect("validated schema yields a valid rule set")
}

pub fn schema_of_ruleset(rules: &RuleSet) -> ReactionSchema {
    let g = rules.group_size();
    let reactions = (1..g)
        .map(|k| {
            let polarity = rules.polarity_for(k).expect("mixed composition");
            Reaction::for_composition(k, g, polarity)
        })
        .collect();
    ReactionSchema {
        group_size: g,
        reactions,
    }
}

/// Parses a compact label such as `"MMm"`; position `i` (0-based) holds the
/// polarity for minority count `i + 1`.
pub fn parse_polarity_string(label: &str, group_size: usize) -> Result<RuleSet, SchemaError> {
    if group_size < 3 || group_size.is_multiple_of(2) {
        return Err(ModelError::InvalidGroupSize(group_size).into());
    }
    let expected = (group_size - 1) / 2;
    let found = label.chars().count();
    if found != expected {
        return Err(SchemaError::PolarityLength {
            label: label.to_string(),
            group_size,
            expected,
            found,
        });
    }
    let polarities = label
        .chars()
        .enumerate()
        .map(|(position, c)| match c {
            'M' => Ok(RulePolarity::Majority),
            'm' => Ok(RulePolarity::Minority),
            found => Err(SchemaError::PolarityChar {
                label: label.to_string(),
                found,
                position,
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RuleSet::new(group_size, polarities)?)
}
