//! Finite alphabets, paired symbol sequences, and the plain-text sequence format.
//!
//! Symbols are dense integers `0..size`. A sequence file holds one `(x, y)`
//! pair per line, either comma separated or whitespace separated; lines whose
//! first non-blank character is `#` are comments. The first `k` data rows form
//! the initial context and the remaining `n = rows - k` rows are transitions.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Symbol = u32;

/// A finite alphabet `{0, 1, ..., size - 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Alphabet(usize);

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("alphabet size must be at least 1".into()));
        }
        if size > Symbol::MAX as usize {
            return Err(Error::InvalidArgument(format!("alphabet size {size} too large")));
        }
        Ok(Alphabet(size))
    }

    #[inline]
    pub fn size(self) -> usize {
        self.0
    }

    #[inline]
    pub fn contains(self, symbol: Symbol) -> bool {
        (symbol as usize) < self.0
    }
}

impl TryFrom<usize> for Alphabet {
    type Error = Error;
    fn try_from(size: usize) -> Result<Self> {
        Alphabet::new(size)
    }
}

impl From<Alphabet> for usize {
    fn from(a: Alphabet) -> usize {
        a.0
    }
}

/// Selects one coordinate of a [`SymbolSequencePair`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stream {
    #[default]
    X,
    Y,
}

/// A single symbol stream together with its alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolSequence {
    alphabet: Alphabet,
    symbols: Vec<Symbol>,
}

impl SymbolSequence {
    pub fn new(alphabet: Alphabet, symbols: Vec<Symbol>) -> Result<Self> {
        if let Some(pos) = symbols.iter().position(|&s| !alphabet.contains(s)) {
            return Err(Error::SymbolOutOfRange {
                line: pos + 1,
                column: "x",
                symbol: symbols[pos] as u64,
                size: alphabet.size(),
            });
        }
        Ok(SymbolSequence { alphabet, symbols })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Aligned sample paths `(x, y)` including a length-`k` initial context.
///
/// The sample size is `n = len - k`; construction guarantees `n >= 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolSequencePair {
    x: Vec<Symbol>,
    y: Vec<Symbol>,
    x_alphabet: Alphabet,
    y_alphabet: Alphabet,
    k: usize,
}

impl SymbolSequencePair {
    pub fn new(x: Vec<Symbol>, y: Vec<Symbol>, alphabets: (Alphabet, Alphabet), k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("order k must be at least 1".into()));
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { x: x.len(), y: y.len() });
        }
        for (i, (&a, &b)) in x.iter().zip(&y).enumerate() {
            check_symbol(a, alphabets.0, i + 1, "x")?;
            check_symbol(b, alphabets.1, i + 1, "y")?;
        }
        if x.len() <= k {
            return Err(Error::SequenceTooShort { len: x.len(), k });
        }
        Ok(SymbolSequencePair {
            x,
            y,
            x_alphabet: alphabets.0,
            y_alphabet: alphabets.1,
            k,
        })
    }

    pub fn x(&self) -> &[Symbol] {
        &self.x
    }

    pub fn y(&self) -> &[Symbol] {
        &self.y
    }

    pub fn alphabets(&self) -> (Alphabet, Alphabet) {
        (self.x_alphabet, self.y_alphabet)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Total length including the initial context.
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Number of observed transitions, `len - k`.
    pub fn n(&self) -> usize {
        self.x.len() - self.k
    }

    /// Reinterprets the same rows under a different order.
    pub fn with_order(&self, k: usize) -> Result<Self> {
        SymbolSequencePair::new(self.x.clone(), self.y.clone(), self.alphabets(), k)
    }

    /// One coordinate stream with its alphabet.
    pub fn view(&self, stream: Stream) -> SymbolSequence {
        match stream {
            Stream::X => SymbolSequence {
                alphabet: self.x_alphabet,
                symbols: self.x.clone(),
            },
            Stream::Y => SymbolSequence {
                alphabet: self.y_alphabet,
                symbols: self.y.clone(),
            },
        }
    }
}

/// Returns the x stream (or the y stream) of `pair`.
pub fn univariate_view(pair: &SymbolSequencePair, stream: Stream) -> SymbolSequence {
    pair.view(stream)
}

fn check_symbol(symbol: Symbol, alphabet: Alphabet, line: usize, column: &'static str) -> Result<()> {
    if alphabet.contains(symbol) {
        Ok(())
    } else {
        Err(Error::SymbolOutOfRange {
            line,
            column,
            symbol: symbol as u64,
            size: alphabet.size(),
        })
    }
}

/// On-disk layout of a sequence file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SequenceFormat {
    /// `x,y` per line.
    #[default]
    Csv,
    /// `x y` per line, any run of spaces or tabs.
    Whitespace,
}

impl FromStr for SequenceFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "two-column-csv" => Ok(SequenceFormat::Csv),
            "whitespace" | "ws" => Ok(SequenceFormat::Whitespace),
            other => Err(Error::InvalidArgument(format!("unknown sequence format `{other}`"))),
        }
    }
}

impl fmt::Display for SequenceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceFormat::Csv => f.write_str("csv"),
            SequenceFormat::Whitespace => f.write_str("whitespace"),
        }
    }
}

/// Reads and validates a sequence file.
pub fn load_sequences(
    path: impl AsRef<Path>,
    format: SequenceFormat,
    alphabets: (Alphabet, Alphabet),
    k: usize,
) -> Result<SymbolSequencePair> {
    let file = std::fs::File::open(path)?;
    read_sequences(file, format, alphabets, k)
}

pub fn read_sequences<R: Read>(
    reader: R,
    format: SequenceFormat,
    alphabets: (Alphabet, Alphabet),
    k: usize,
) -> Result<SymbolSequencePair> {
    let rows = read_rows(reader, format)?;
    let mut x = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for row in rows {
        check_symbol_u64(row.x, alphabets.0, row.line, "x")?;
        check_symbol_u64(row.y, alphabets.1, row.line, "y")?;
        x.push(row.x as Symbol);
        y.push(row.y as Symbol);
    }
    SymbolSequencePair::new(x, y, alphabets, k)
}

/// A parsed data row and the (1-based) file line it came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Row {
    pub line: usize,
    pub x: u64,
    pub y: u64,
}

/// Parses rows without alphabet validation, e.g. to infer alphabet sizes.
pub fn read_rows<R: Read>(reader: R, format: SequenceFormat) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match format {
            SequenceFormat::Csv => trimmed.split(',').map(str::trim).collect(),
            SequenceFormat::Whitespace => trimmed.split_whitespace().collect(),
        };
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 fields in {format} row, found {}", fields.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<u64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("`{s}` is not a nonnegative integer"),
            })
        };
        rows.push(Row {
            line: line_no,
            x: parse(fields[0])?,
            y: parse(fields[1])?,
        });
    }
    Ok(rows)
}

fn check_symbol_u64(symbol: u64, alphabet: Alphabet, line: usize, column: &'static str) -> Result<()> {
    if symbol < alphabet.size() as u64 {
        Ok(())
    } else {
        Err(Error::SymbolOutOfRange {
            line,
            column,
            symbol,
            size: alphabet.size(),
        })
    }
}

/// Writes `pair` in the ingestion format, one row per line.
pub fn write_sequences<W: Write>(pair: &SymbolSequencePair, mut out: W, format: SequenceFormat) -> Result<()> {
    let sep = match format {
        SequenceFormat::Csv => ',',
        SequenceFormat::Whitespace => ' ',
    };
    for (a, b) in pair.x.iter().zip(&pair.y) {
        writeln!(out, "{a}{sep}{b}")?;
    }
    out.flush()?;
    Ok(())
}
