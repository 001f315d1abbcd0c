use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    Feature(String),
    /// Element `k` of the list reached so far.
    Index(usize),
}

/// A dotted feature path such as `arg-st.args[1].loc.cont.gen`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeaturePath {
    steps: Vec<Step>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid feature path `{path}`: {msg}")]
pub struct PathError {
    pub path: String,
    pub msg: String,
}

impl FeaturePath {
    pub fn root() -> FeaturePath {
        FeaturePath::default()
    }

    pub fn from_steps(steps: Vec<Step>) -> FeaturePath {
        FeaturePath { steps }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn is_root(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn join(&self, other: &FeaturePath) -> FeaturePath {
        let mut steps = self.steps.clone();
        steps.extend(other.steps.iter().cloned());
        FeaturePath { steps }
    }

    pub fn index(&self, k: usize) -> FeaturePath {
        let mut steps = self.steps.clone();
        steps.push(Step::Index(k));
        FeaturePath { steps }
    }

    pub fn feature(&self, name: &str) -> FeaturePath {
        let mut steps = self.steps.clone();
        steps.push(Step::Feature(name.to_string()));
        FeaturePath { steps }
    }

    /// The last step, if it names a feature.
    pub fn last_feature(&self) -> Option<&str> {
        match self.steps.last() {
            Some(Step::Feature(f)) => Some(f),
            _ => None,
        }
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-')
}

impl FromStr for FeaturePath {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |msg: &str| PathError {
            path: s.to_string(),
            msg: msg.to_string(),
        };
        let mut steps = Vec::new();
        if s.is_empty() {
            return Ok(FeaturePath { steps });
        }
        for segment in s.split('.') {
            let (name, mut rest) = match segment.find('[') {
                Some(i) => (&segment[..i], &segment[i..]),
                None => (segment, ""),
            };
            if !valid_name(name) {
                return Err(err("empty or invalid feature name"));
            }
            steps.push(Step::Feature(name.to_string()));
            while !rest.is_empty() {
                let close = rest.find(']').ok_or_else(|| err("unclosed `[`"))?;
                if !rest.starts_with('[') {
                    return Err(err("unexpected characters after index"));
                }
                let k: usize = rest[1..close]
                    .parse()
                    .map_err(|_| err("list index must be a non-negative integer"))?;
                steps.push(Step::Index(k));
                rest = &rest[close + 1..];
            }
        }
        Ok(FeaturePath { steps })
    }
}

impl fmt::Display for FeaturePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for step in &self.steps {
            match step {
                Step::Feature(name) => {
                    if !first {
                        f.write_str(".")?;
                    }
                    f.write_str(name)?;
                }
                Step::Index(k) => write!(f, "[{k}]")?,
            }
            first = false;
        }
        Ok(())
    }
}

impl serde::Serialize for FeaturePath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for FeaturePath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_indices_and_dashes() {
        let p: FeaturePath = "arg-st.args[1].loc.cont.gen".parse().unwrap();
        assert_eq!(p.steps().len(), 6);
        assert_eq!(p.steps()[2], Step::Index(1));
        assert_eq!(p.to_string(), "arg-st.args[1].loc.cont.gen");
    }

    #[test]
    fn rejects_bad_paths() {
        assert!("a..b".parse::<FeaturePath>().is_err());
        assert!("args[x]".parse::<FeaturePath>().is_err());
        assert!("args[-1]".parse::<FeaturePath>().is_err());
        assert!("args[1".parse::<FeaturePath>().is_err());
    }

    #[test]
    fn join_concatenates() {
        let a: FeaturePath = "arg-st.args".parse().unwrap();
        let b: FeaturePath = "loc.cont.gen".parse().unwrap();
        assert_eq!(a.index(0).join(&b).to_string(), "arg-st.args[0].loc.cont.gen");
    }
}
