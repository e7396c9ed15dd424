//! Boolean execution-order expressions over step indices, e.g.
//! `(Step 1 AND Step 2 AND (Step 3 OR Step 4))`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ExecutionOrder {
    Step(usize),
    And(Vec<ExecutionOrder>),
    Or(Vec<ExecutionOrder>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse execution order: {0}")]
pub struct OrderSyntaxError(pub String);

impl ExecutionOrder {
    /// `Step 1 AND Step 2 AND … AND Step n`.
    pub fn all_and(n: usize) -> Self {
        match n {
            1 => ExecutionOrder::Step(1),
            _ => ExecutionOrder::And((1..=n).map(ExecutionOrder::Step).collect()),
        }
    }

    pub fn indices(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_indices(&mut out);
        out
    }

    fn collect_indices(&self, out: &mut BTreeSet<usize>) {
        match self {
            ExecutionOrder::Step(i) => {
                out.insert(*i);
            }
            ExecutionOrder::And(xs) | ExecutionOrder::Or(xs) => xs.iter().for_each(|x| x.collect_indices(out)),
        }
    }

    /// True when the expression is a plain conjunction of steps.
    pub fn is_all_and(&self) -> bool {
        match self {
            ExecutionOrder::Step(_) => true,
            ExecutionOrder::And(xs) => xs.iter().all(ExecutionOrder::is_all_and),
            ExecutionOrder::Or(_) => false,
        }
    }

    /// Runs steps through `run`, which reports success. AND stops at the first
    /// failure; OR stops at the first success.
    pub fn evaluate(&self, run: &mut dyn FnMut(usize) -> bool) -> bool {
        match self {
            ExecutionOrder::Step(i) => run(*i),
            ExecutionOrder::And(xs) => xs.iter().all(|x| x.evaluate(run)),
            ExecutionOrder::Or(xs) => xs.iter().any(|x| x.evaluate(run)),
        }
    }

    /// Steps visited when every step succeeds.
    pub fn schedule(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.evaluate(&mut |i| {
            out.push(i);
            true
        });
        out
    }

    /// Drops step `removed` and shifts higher indices down by one. Returns
    /// `None` when nothing is left.
    pub fn without_step(&self, removed: usize) -> Option<Self> {
        match self {
            ExecutionOrder::Step(i) if *i == removed => None,
            ExecutionOrder::Step(i) => Some(ExecutionOrder::Step(if *i > removed { i - 1 } else { *i })),
            ExecutionOrder::And(xs) | ExecutionOrder::Or(xs) => {
                let kept: Vec<_> = xs.iter().filter_map(|x| x.without_step(removed)).collect();
                match kept.len() {
                    0 => None,
                    1 => kept.into_iter().next(),
                    _ => Some(match self {
                        ExecutionOrder::And(_) => ExecutionOrder::And(kept),
                        _ => ExecutionOrder::Or(kept),
                    }),
                }
            }
        }
    }

    fn fmt_inner(&self, f: &mut fmt::Formatter<'_>, nested: bool) -> fmt::Result {
        match self {
            ExecutionOrder::Step(i) => write!(f, "Step {i}"),
            ExecutionOrder::And(xs) | ExecutionOrder::Or(xs) => {
                let op = if matches!(self, ExecutionOrder::And(_)) { " AND " } else { " OR " };
                if nested {
                    f.write_str("(")?;
                }
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(op)?;
                    }
                    x.fmt_inner(f, true)?;
                }
                if nested {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for ExecutionOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        self.fmt_inner(f, false)?;
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    And,
    Or,
    Step(usize),
}

/// Tokenizes until the first word that is not part of the grammar, so
/// trailing chatter such as "Goal completed!" is ignored.
fn lex(text: &str) -> Result<Vec<Token>, OrderSyntaxError> {
    let mut tokens = Vec::new();
    let mut rest = text.trim_start();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix('(') {
            tokens.push(Token::Open);
            rest = r;
        } else if let Some(r) = rest.strip_prefix(')') {
            tokens.push(Token::Close);
            rest = r;
        } else {
            let end = rest.find(|c: char| c.is_whitespace() || c == '(' || c == ')').unwrap_or(rest.len());
            let word = &rest[..end];
            match word.to_ascii_lowercase().as_str() {
                "and" | "&&" => tokens.push(Token::And),
                "or" | "||" => tokens.push(Token::Or),
                "step" => {
                    let after = rest[end..].trim_start();
                    let digits = after.find(|c: char| !c.is_ascii_digit()).unwrap_or(after.len());
                    let n = after[..digits]
                        .parse()
                        .map_err(|_| OrderSyntaxError(format!("'Step' without a number near '{}'", after)))?;
                    tokens.push(Token::Step(n));
                    rest = &after[digits..];
                    rest = rest.trim_start();
                    continue;
                }
                _ => break,
            }
            rest = &rest[end..];
        }
        rest = rest.trim_start();
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn expr(&mut self) -> Result<ExecutionOrder, OrderSyntaxError> {
        let mut terms = vec![self.conjunction()?];
        while self.peek() == Some(&Token::Or) {
            self.next();
            terms.push(self.conjunction()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { ExecutionOrder::Or(terms) })
    }

    fn conjunction(&mut self) -> Result<ExecutionOrder, OrderSyntaxError> {
        let mut terms = vec![self.atom()?];
        while self.peek() == Some(&Token::And) {
            self.next();
            terms.push(self.atom()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { ExecutionOrder::And(terms) })
    }

    fn atom(&mut self) -> Result<ExecutionOrder, OrderSyntaxError> {
        match self.next() {
            Some(Token::Step(n)) => Ok(ExecutionOrder::Step(n)),
            Some(Token::Open) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token::Close) => Ok(inner),
                    other => Err(OrderSyntaxError(format!("expected ')', found {other:?}"))),
                }
            }
            other => Err(OrderSyntaxError(format!("expected a step or '(', found {other:?}"))),
        }
    }
}

impl FromStr for ExecutionOrder {
    type Err = OrderSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens = lex(s)?;
        if tokens.is_empty() {
            return Err(OrderSyntaxError("empty expression".into()));
        }
        let mut parser = Parser { tokens, at: 0 };
        let expr = parser.expr()?;
        if parser.at < parser.tokens.len() {
            return Err(OrderSyntaxError(format!("unexpected {:?}", parser.tokens[parser.at])));
        }
        Ok(expr)
    }
}

impl From<ExecutionOrder> for String {
    fn from(order: ExecutionOrder) -> Self {
        order.to_string()
    }
}

impl TryFrom<String> for ExecutionOrder {
    type Error = OrderSyntaxError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_paper_style_conjunction() {
        let order: ExecutionOrder = "(Step 1 AND Step 2 AND Step 3) Goal completed!".parse().unwrap();
        assert_eq!(order, ExecutionOrder::all_and(3));
        assert_eq!(order.to_string(), "(Step 1 AND Step 2 AND Step 3)");
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let order: ExecutionOrder = "Step 1 AND Step 2 OR Step 3".parse().unwrap();
        assert_eq!(
            order,
            ExecutionOrder::Or(vec![
                ExecutionOrder::And(vec![ExecutionOrder::Step(1), ExecutionOrder::Step(2)]),
                ExecutionOrder::Step(3),
            ])
        );
        assert!(!order.is_all_and());
    }

    #[test]
    fn or_takes_first_success() {
        let order: ExecutionOrder = "(Step 1 AND (Step 2 OR Step 3) AND Step 4)".parse().unwrap();
        let mut ran = Vec::new();
        assert!(order.evaluate(&mut |i| {
            ran.push(i);
            i != 2
        }));
        assert_eq!(ran, [1, 2, 3, 4]);
        assert_eq!(order.schedule(), [1, 2, 4]);
    }

    #[test]
    fn syntax_errors() {
        assert!("".parse::<ExecutionOrder>().is_err());
        assert!("(Step 1 AND".parse::<ExecutionOrder>().is_err());
        assert!("(Step AND Step 2)".parse::<ExecutionOrder>().is_err());
    }

    #[test]
    fn removing_a_step_renumbers() {
        let order = ExecutionOrder::all_and(4);
        assert_eq!(order.without_step(2), Some(ExecutionOrder::all_and(3)));
        assert_eq!(ExecutionOrder::Step(1).without_step(1), None);
    }

    fn order_tree() -> impl Strategy<Value = ExecutionOrder> {
        let leaf = (1usize..20).prop_map(ExecutionOrder::Step);
        leaf.prop_recursive(3, 16, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(ExecutionOrder::And),
                prop::collection::vec(inner, 2..4).prop_map(ExecutionOrder::Or),
            ]
        })
    }

    fn flatten(o: ExecutionOrder) -> ExecutionOrder {
        // Nested same-operator groups print identically to their flattened form.
        match o {
            ExecutionOrder::Step(_) => o,
            ExecutionOrder::And(xs) => ExecutionOrder::And(
                xs.into_iter()
                    .map(flatten)
                    .collect(),
            ),
            ExecutionOrder::Or(xs) => ExecutionOrder::Or(xs.into_iter().map(flatten).collect()),
        }
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(order in order_tree()) {
            let printed = order.to_string();
            let back: ExecutionOrder = printed.parse().unwrap();
            prop_assert_eq!(back.to_string(), printed);
            prop_assert_eq!(back.indices(), flatten(order).indices());
        }

        #[test]
        fn all_and_runs_in_index_order(n in 1usize..40) {
            let order = ExecutionOrder::all_and(n);
            prop_assert!(order.is_all_and());
            prop_assert_eq!(order.schedule(), (1..=n).collect::<Vec<_>>());
        }
    }
}
