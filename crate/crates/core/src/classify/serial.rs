//! Versioned line-oriented text format for trained binary models.
//!
//! ```text
//! cardiac-fat model v1
//! learner <tree|forest|gnb|hyperpipes>
//! schema <hash>
//! target <class>
//! <learner body>
//! ```
//!
//! Floats are written in their shortest round-tripping form, so a save/load
//! cycle is bit-exact.

use std::fmt::Write as _;
use std::str::{FromStr, Lines};

use super::{BinaryModel, DecisionTree, ForestModel, GaussianNbModel, HyperPipesModel, TrainedModel, TreeNode};
use crate::error::{Error, Result};

const MAGIC: &str = "cardiac-fat model v1";

pub(super) fn model_to_text(m: &TrainedModel) -> String {
    let mut s = String::new();
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "learner {}", m.model.learner_name()).unwrap();
    writeln!(s, "schema {}", m.schema_hash).unwrap();
    writeln!(s, "target {}", m.target).unwrap();
    match &m.model {
        BinaryModel::Tree(t) => write_tree(&mut s, t),
        BinaryModel::Forest(f) => {
            writeln!(
                s,
                "forest {} {} {} {} {}",
                f.trees.len(),
                f.mtry,
                f.seed,
                f.bootstrap,
                f.threshold
            )
            .unwrap();
            for t in &f.trees {
                write_tree(&mut s, t);
            }
        }
        BinaryModel::Gnb(g) => {
            writeln!(s, "features {}", g.means[0].len()).unwrap();
            writeln!(s, "prior {} {}", g.priors[0], g.priors[1]).unwrap();
            for c in 0..2 {
                writeln!(s, "mean {c}{}", join(&g.means[c])).unwrap();
            }
            for c in 0..2 {
                writeln!(s, "var {c}{}", join(&g.variances[c])).unwrap();
            }
        }
        BinaryModel::HyperPipes(h) => {
            writeln!(s, "features {}", h.n_features).unwrap();
            for (c, b) in h.bounds.iter().enumerate() {
                match b {
                    None => writeln!(s, "bounds {c} none").unwrap(),
                    Some(b) => {
                        let flat: Vec<f64> = b.iter().flat_map(|&(lo, hi)| [lo, hi]).collect();
                        writeln!(s, "bounds {c}{}", join(&flat)).unwrap();
                    }
                }
            }
        }
    }
    s
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!(" {v}")).collect()
}

fn write_tree(s: &mut String, t: &DecisionTree) {
    writeln!(s, "tree {}", t.nodes().len()).unwrap();
    for n in t.nodes() {
        match *n {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                pos,
                neg,
            } => writeln!(s, "S {feature} {threshold} {left} {right} {pos} {neg}").unwrap(),
            TreeNode::Leaf { pos, neg } => writeln!(s, "L {pos} {neg}").unwrap(),
        }
    }
}

struct Reader<'a> {
    lines: Lines<'a>,
}

impl<'a> Reader<'a> {
    fn line(&mut self) -> Result<&'a str> {
        self.lines
            .next()
            .ok_or_else(|| Error::Parse("model file ends early".into()))
    }

    /// Tokens of the next line, which must start with `key`.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.line()?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(key) {
            return Err(Error::Parse(format!("expected `{key}` line, found `{line}`")));
        }
        Ok(toks.collect())
    }

    fn single(&mut self, key: &str) -> Result<&'a str> {
        let toks = self.keyed(key)?;
        exactly(&toks, 1)?;
        Ok(toks[0])
    }
}

fn parse<T: FromStr>(tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("bad value `{tok}` in model file")))
}

fn parse_all<T: FromStr>(toks: &[&str]) -> Result<Vec<T>> {
    toks.iter().map(|t| parse(t)).collect()
}

fn exactly<'t>(toks: &'t [&'t str], n: usize) -> Result<&'t [&'t str]> {
    if toks.len() != n {
        return Err(Error::Parse(format!("expected {n} values, found {}", toks.len())));
    }
    Ok(toks)
}

fn read_tree(r: &mut Reader) -> Result<DecisionTree> {
    let n: usize = parse(r.single("tree")?)?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let line = r.line()?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        nodes.push(match toks.first() {
            Some(&"S") if toks.len() == 7 => TreeNode::Split {
                feature: parse(toks[1])?,
                threshold: parse(toks[2])?,
                left: parse(toks[3])?,
                right: parse(toks[4])?,
                pos: parse(toks[5])?,
                neg: parse(toks[6])?,
            },
            Some(&"L") if toks.len() == 3 => TreeNode::Leaf {
                pos: parse(toks[1])?,
                neg: parse(toks[2])?,
            },
            _ => return Err(Error::Parse(format!("bad tree node `{line}`"))),
        });
    }
    DecisionTree::from_nodes(nodes)
}

fn class_row(r: &mut Reader, key: &str, class: usize, d: usize) -> Result<Vec<f64>> {
    let toks = r.keyed(key)?;
    if toks.first() != Some(&class.to_string().as_str()) {
        return Err(Error::Parse(format!("expected `{key} {class}` line")));
    }
    parse_all(exactly(&toks[1..], d)?)
}

pub(super) fn model_from_text(text: &str) -> Result<TrainedModel> {
    let mut r = Reader { lines: text.lines() };
    if r.line()?.trim() != MAGIC {
        return Err(Error::Parse("not a cardiac-fat model file".into()));
    }
    let learner = r.single("learner")?;
    let schema_hash = r.single("schema")?.to_string();
    let target = parse(r.single("target")?)?;
    let model = match learner {
        "tree" => BinaryModel::Tree(read_tree(&mut r)?),
        "forest" => {
            let toks = r.keyed("forest")?;
            let t = exactly(&toks, 5)?;
            let n: usize = parse(t[0])?;
            if n == 0 {
                return Err(Error::Parse("forest has no trees".into()));
            }
            let trees = (0..n).map(|_| read_tree(&mut r)).collect::<Result<_>>()?;
            BinaryModel::Forest(ForestModel {
                trees,
                mtry: parse(t[1])?,
                seed: parse(t[2])?,
                bootstrap: parse(t[3])?,
                threshold: parse(t[4])?,
            })
        }
        "gnb" => {
            let d: usize = parse(r.single("features")?)?;
            let p: Vec<f64> = { let t = r.keyed("prior")?; parse_all(exactly(&t, 2)?)? };
            let means = [class_row(&mut r, "mean", 0, d)?, class_row(&mut r, "mean", 1, d)?];
            let variances = [class_row(&mut r, "var", 0, d)?, class_row(&mut r, "var", 1, d)?];
            if variances.iter().flatten().any(|&v| v.is_nan() || v <= 0.0) {
                return Err(Error::Parse("gaussian variances must be positive".into()));
            }
            BinaryModel::Gnb(GaussianNbModel {
                means,
                variances,
                priors: [p[0], p[1]],
            })
        }
        "hyperpipes" => {
            let d: usize = parse(r.single("features")?)?;
            let mut bounds: [Option<Vec<(f64, f64)>>; 2] = [None, None];
            for (c, b) in bounds.iter_mut().enumerate() {
                let toks = r.keyed("bounds")?;
                if toks.first() != Some(&c.to_string().as_str()) {
                    return Err(Error::Parse(format!("expected `bounds {c}` line")));
                }
                if toks[1..] != ["none"] {
                    let flat: Vec<f64> = parse_all(exactly(&toks[1..], 2 * d)?)?;
                    *b = Some(flat.chunks(2).map(|p| (p[0], p[1])).collect());
                }
            }
            BinaryModel::HyperPipes(HyperPipesModel { bounds, n_features: d })
        }
        other => return Err(Error::Parse(format!("unknown learner `{other}`"))),
    };
    if r.lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::Parse("trailing content in model file".into()));
    }
    Ok(TrainedModel {
        schema_hash,
        target,
        model,
    })
}
