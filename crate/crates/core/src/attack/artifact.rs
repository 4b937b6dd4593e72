//! Text serialisation of trained generators.
//!
//! ```text
//! cpsattack-generator 1
//! kind fnn
//! model vehicle
//! support 2 1 2            # p, then 1-based attacked sensors
//! form innovation          # fnn only
//! select 0 1 3 4 5
//! offset 0.0 0.0 0.0 0.0 0.0
//! scale 1.0 1.0 1.0 1.0 0.1
//! train delta 0.2 lambda 0.05 ...
//! layers 3
//! layer 5 15
//! w <in·out values, row-major>
//! b <out values>
//! ...
//! readout 3 2              # dfnn only, followed by a `w` line
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so loading reproduces
//! every parameter bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::generator::{DfnnGenerator, FnnGenerator, Generator, SensorSupport};
use super::network::{Dense, FeatureForm, InputMap, Mlp};
use super::training::{OptimizerKind, TrainingConfig};
use crate::autodiff::Tensor;
use crate::linalg::Vector;
use crate::{Error, Result};

const MAGIC: &str = "cpsattack-generator";
const VERSION: u32 = 1;

/// A generator plus the metadata needed to reuse it.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub generator: Generator,
    pub model_id: String,
    pub training: TrainingConfig,
}

fn floats(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:?}").expect("writing to a String");
    }
    s
}

fn ints(values: &[usize]) -> String {
    values
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

impl Artifact {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(format!("{MAGIC} {VERSION}"));
        line(format!("kind {}", self.generator.kind()));
        line(format!("model {}", self.model_id));
        let support = self.generator.support();
        line(format!(
            "support {} {}",
            support.p(),
            ints(&support.one_based())
        ));
        let (net, input) = match &self.generator {
            Generator::Fnn(g) => {
                line(format!("form {}", g.form.name()));
                (&g.net, &g.input)
            }
            Generator::Dfnn(g) => (&g.net, &g.input),
        };
        line(format!("select {}", ints(&input.select)));
        line(format!("offset {}", floats(&input.offset)));
        line(format!("scale {}", floats(&input.scale)));
        let c = &self.training;
        line(format!(
            "train delta {:?} lambda {:?} beta {:?} horizon {} inner_max {} inner_tol {:?} eps_smooth {:?} optimizer {} clip {}",
            c.delta,
            c.lambda,
            c.beta,
            c.horizon,
            c.inner_max,
            c.inner_tol,
            c.eps_smooth,
            c.optimizer.name(),
            c.clip.map_or("none".to_string(), |v| format!("{v:?}"))
        ));
        line(format!("layers {}", net.layers().len()));
        for layer in net.layers() {
            line(format!("layer {} {}", layer.fan_in(), layer.fan_out()));
            line(format!("w {}", floats(layer.w.data())));
            line(format!("b {}", floats(layer.b.data())));
        }
        if let Generator::Dfnn(g) = &self.generator {
            let (l, p) = g.w.dims2();
            line(format!("readout {l} {p}"));
            line(format!("w {}", floats(g.w.data())));
        }
        line("end".into());
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        Parser::new(text, origin).artifact()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Artifact::from_text(&text, path)
    }
}

struct Parser<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    origin: &'a Path,
    line_no: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, origin: &'a Path) -> Self {
        Parser {
            lines: text.lines().enumerate().peekable(),
            origin,
            line_no: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Artifact {
            path: self.origin.to_path_buf(),
            msg: format!("line {}: {}", self.line_no, msg.into()),
        }
    }

    /// Next non-empty line, which must start with `key`; returns the rest.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        loop {
            let Some((i, raw)) = self.lines.next() else {
                self.line_no += 1;
                return Err(self.err(format!("expected `{key}`, found end of file")));
            };
            self.line_no = i + 1;
            let mut words = raw.split_whitespace();
            match words.next() {
                None => continue,
                Some(k) if k == key => return Ok(words.collect()),
                Some(k) => return Err(self.err(format!("expected `{key}`, found `{k}`"))),
            }
        }
    }

    fn peek_key(&mut self) -> Option<&'a str> {
        while let Some((_, raw)) = self.lines.peek() {
            if raw.trim().is_empty() {
                self.lines.next();
                continue;
            }
            return raw.split_whitespace().next();
        }
        None
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse()
            .map_err(|_| self.err(format!("`{s}` is not a valid number")))
    }

    fn nums<T: std::str::FromStr>(&self, words: &[&str]) -> Result<Vec<T>> {
        words.iter().map(|w| self.num(w)).collect()
    }

    fn single(&mut self, key: &str) -> Result<&'a str> {
        let words = self.expect(key)?;
        match words.as_slice() {
            [w] => Ok(w),
            _ => Err(self.err(format!("`{key}` takes one value"))),
        }
    }

    fn tensor(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        let words = self.expect("w")?;
        let data: Vec<f64> = self.nums(&words)?;
        if data.len() != rows * cols {
            return Err(self.err(format!(
                "expected {} weights, found {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor::matrix(rows, cols, data)?.with_grad())
    }

    fn training(&mut self) -> Result<TrainingConfig> {
        let words = self.expect("train")?;
        if words.len() % 2 != 0 {
            return Err(self.err("`train` needs key/value pairs"));
        }
        let mut cfg = TrainingConfig::default();
        for kv in words.chunks(2) {
            let v = kv[1];
            match kv[0] {
                "delta" => cfg.delta = self.num(v)?,
                "lambda" => cfg.lambda = self.num(v)?,
                "beta" => cfg.beta = self.num(v)?,
                "horizon" => cfg.horizon = self.num(v)?,
                "inner_max" => cfg.inner_max = self.num(v)?,
                "inner_tol" => cfg.inner_tol = self.num(v)?,
                "eps_smooth" => cfg.eps_smooth = self.num(v)?,
                "optimizer" => {
                    cfg.optimizer = OptimizerKind::parse(v)
                        .ok_or_else(|| self.err(format!("unknown optimizer `{v}`")))?
                }
                "clip" => {
                    cfg.clip = if v == "none" {
                        None
                    } else {
                        Some(self.num(v)?)
                    }
                }
                k => return Err(self.err(format!("unknown training key `{k}`"))),
            }
        }
        Ok(cfg)
    }

    fn artifact(mut self) -> Result<Artifact> {
        let header = self.expect(MAGIC)?;
        let version: u32 = match header.as_slice() {
            [v] => self.num(v)?,
            _ => return Err(self.err("malformed header")),
        };
        if version != VERSION {
            return Err(self.err(format!("unsupported artifact version {version}")));
        }
        let kind = self.single("kind")?;
        let model_id = self.single("model")?.to_string();
        let support_words = self.expect("support")?;
        let Some((p_word, idx)) = support_words.split_first() else {
            return Err(self.err("`support` needs the measurement dimension"));
        };
        let p: usize = self.num(p_word)?;
        let idx: Vec<usize> = self.nums(idx)?;
        let support =
            SensorSupport::from_one_based(&idx, p).map_err(|e| self.err(e.to_string()))?;
        let form = if kind == "fnn" {
            let f = self.single("form")?;
            Some(
                FeatureForm::parse(f)
                    .ok_or_else(|| self.err(format!("unknown feature form `{f}`")))?,
            )
        } else {
            None
        };
        let select = {
            let w = self.expect("select")?;
            self.nums(&w)?
        };
        let offset = {
            let w = self.expect("offset")?;
            self.nums(&w)?
        };
        let scale = {
            let w = self.expect("scale")?;
            self.nums(&w)?
        };
        if select.len() != offset.len() || select.len() != scale.len() {
            return Err(self.err("input map lists differ in length"));
        }
        let input = InputMap {
            select,
            offset,
            scale,
        };
        let training = self.training()?;
        let n_word = self.single("layers")?;
        let n_layers: usize = self.num(n_word)?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let dims: Vec<usize> = {
                let w = self.expect("layer")?;
                self.nums(&w)?
            };
            let [fi, fo] = dims[..] else {
                return Err(self.err("`layer` takes two sizes"));
            };
            let w = self.tensor(fi, fo)?;
            let bw = self.expect("b")?;
            let b: Vec<f64> = self.nums(&bw)?;
            if b.len() != fo {
                return Err(self.err(format!("expected {fo} biases, found {}", b.len())));
            }
            layers.push(Dense {
                w,
                b: Tensor::matrix(1, fo, b)?.with_grad(),
            });
        }
        let net = Mlp::from_layers(layers).map_err(|e| self.err(e.to_string()))?;
        let generator = match (kind, form) {
            ("fnn", Some(form)) => {
                if net.input_dim() != input.dim() || net.output_dim() != p {
                    return Err(self.err("network shape does not match input map and support"));
                }
                Generator::Fnn(FnnGenerator {
                    net,
                    form,
                    input,
                    support,
                })
            }
            ("dfnn", None) => {
                let dims: Vec<usize> = {
                    let w = self.expect("readout")?;
                    self.nums(&w)?
                };
                let [l, pw] = dims[..] else {
                    return Err(self.err("`readout` takes two sizes"));
                };
                if pw != p || net.output_dim() != l || net.input_dim() != input.dim() + l {
                    return Err(self.err("readout shape does not match the network"));
                }
                let w = self.tensor(l, p)?;
                Generator::Dfnn(DfnnGenerator {
                    net,
                    w,
                    input,
                    support,
                    r: Vector::zeros(l),
                })
            }
            (k, _) => return Err(self.err(format!("unknown generator kind `{k}`"))),
        };
        self.expect("end")?;
        if let Some(k) = self.peek_key() {
            return Err(self.err(format!("unexpected `{k}` after end")));
        }
        Ok(Artifact {
            generator,
            model_id,
            training,
        })
    }
}
