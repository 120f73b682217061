//! Alphabets, words and letter-wise amalgamation maps on full shifts.
//!
//! Symbols carry arbitrary string labels; internally a letter is its dense
//! index in the alphabet (`u8`, so at most 256 symbols). Words over an
//! alphabet of size `k` and length `n` are also addressed by their base-`k`
//! code, which coincides with lexicographic order.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default upper limit on the number of words any enumeration may produce.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// A finite, ordered set of at least two distinct symbols.
#[derive(Clone)]
pub struct Alphabet {
    symbols: Arc<[String]>,
}

impl Alphabet {
    pub fn new<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.len() < 2 {
            return Err(Error::AlphabetTooSmall(symbols.len()));
        }
        if symbols.len() > 256 {
            return Err(Error::AlphabetTooLarge(symbols.len()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::DuplicateSymbol(s.clone()));
            }
        }
        Ok(Self {
            symbols: symbols.into(),
        })
    }

    /// The alphabet `{0, 1, ..., k-1}` with decimal labels.
    pub fn numeric(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| i.to_string()))
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, letter: u8) -> &str {
        &self.symbols[letter as usize]
    }

    pub fn index_of(&self, symbol: &str) -> Option<u8> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .map(|i| i as u8)
    }

    /// True when every label is a single character, so words can be written
    /// without separators.
    pub fn single_char_labels(&self) -> bool {
        self.symbols.iter().all(|s| s.chars().count() == 1)
    }
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.symbols, &other.symbols) || self.symbols == other.symbols
    }
}

impl Eq for Alphabet {}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.symbols.iter()).finish()
    }
}

/// A finite nonempty word over an [`Alphabet`].
#[derive(Clone)]
pub struct Word {
    alphabet: Alphabet,
    letters: Vec<u8>,
}

impl Word {
    pub fn new(alphabet: &Alphabet, letters: Vec<u8>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::EmptyWord);
        }
        if let Some(&bad) = letters.iter().find(|&&l| l as usize >= alphabet.size()) {
            return Err(Error::LetterOutOfRange {
                index: bad as usize,
                size: alphabet.size(),
            });
        }
        Ok(Self {
            alphabet: alphabet.clone(),
            letters,
        })
    }

    pub fn from_indices(alphabet: &Alphabet, letters: &[usize]) -> Result<Self> {
        let size = alphabet.size();
        let letters = letters
            .iter()
            .map(|&l| {
                if l < size {
                    Ok(l as u8)
                } else {
                    Err(Error::LetterOutOfRange { index: l, size })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet, letters)
    }

    /// Parses a word written as symbol labels joined by `separator`. With an
    /// empty separator every character is one symbol.
    pub fn parse(alphabet: &Alphabet, text: &str, separator: &str) -> Result<Self> {
        let lookup = |s: &str| {
            alphabet
                .index_of(s)
                .ok_or_else(|| Error::UnknownSymbol(s.to_string()))
        };
        let letters = if separator.is_empty() {
            let mut buf = [0u8; 4];
            text.chars()
                .map(|c| lookup(c.encode_utf8(&mut buf)))
                .collect::<Result<Vec<_>>>()?
        } else {
            text.split(separator).map(lookup).collect::<Result<Vec<_>>>()?
        };
        Self::new(alphabet, letters)
    }

    pub fn render(&self, separator: &str) -> String {
        let parts: Vec<&str> = self
            .letters
            .iter()
            .map(|&l| self.alphabet.symbol(l))
            .collect();
        parts.join(separator)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn letters(&self) -> &[u8] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// The subword `w_m^n` (both ends inclusive).
    pub fn subword(&self, m: usize, n: usize) -> Result<Self> {
        if m > n || n >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "subword {m}..={n} of a word of length {}",
                self.len()
            )));
        }
        Ok(Self {
            alphabet: self.alphabet.clone(),
            letters: self.letters[m..=n].to_vec(),
        })
    }

    pub fn concat(&self, other: &Word) -> Result<Self> {
        if self.alphabet != other.alphabet {
            return Err(Error::AlphabetMismatch);
        }
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Ok(Self {
            alphabet: self.alphabet.clone(),
            letters,
        })
    }

    /// Base-`k` code of the word; only meaningful while `k^len` fits a `usize`.
    pub fn code(&self) -> usize {
        word_code(&self.letters, self.alphabet.size())
    }

    /// Repeats the word cyclically up to `len` letters.
    pub fn periodic_extension(&self, len: usize) -> Self {
        Self {
            alphabet: self.alphabet.clone(),
            letters: periodic_letters(&self.letters, len),
        }
    }
}

impl PartialEq for Word {
    fn eq(&self, other: &Self) -> bool {
        self.letters == other.letters && self.alphabet == other.alphabet
    }
}

impl Eq for Word {}

impl Hash for Word {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.letters.hash(state);
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.letters.cmp(&other.letters)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = if self.alphabet.single_char_labels() {
            ""
        } else {
            "."
        };
        f.write_str(&self.render(sep))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

/// Base-`k` code of a letter sequence.
pub fn word_code(letters: &[u8], k: usize) -> usize {
    letters.iter().fold(0usize, |acc, &l| acc * k + l as usize)
}

/// Writes the letters of `code` (as a word of length `out.len()`) into `out`.
pub fn decode_word(mut code: usize, k: usize, out: &mut [u8]) {
    for slot in out.iter_mut().rev() {
        *slot = (code % k) as u8;
        code /= k;
    }
}

/// `letters` repeated cyclically to length `len`.
pub fn periodic_letters(letters: &[u8], len: usize) -> Vec<u8> {
    (0..len).map(|i| letters[i % letters.len()]).collect()
}

/// `k^n` if it does not exceed `cap`.
pub fn checked_count(k: usize, n: usize, cap: u64) -> Result<usize> {
    let requested = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(Error::EnumerationTooLarge { requested, cap });
    }
    Ok(requested as usize)
}

/// All words of length `n`, in lexicographic order.
pub fn enumerate_words(alphabet: &Alphabet, n: usize, cap: u64) -> Result<Vec<Word>> {
    if n == 0 {
        return Err(Error::InvalidArgument("word length must be at least 1".into()));
    }
    let k = alphabet.size();
    let count = checked_count(k, n, cap)?;
    let mut out = Vec::with_capacity(count);
    let mut letters = vec![0u8; n];
    for code in 0..count {
        decode_word(code, k, &mut letters);
        out.push(Word {
            alphabet: alphabet.clone(),
            letters: letters.clone(),
        });
    }
    Ok(out)
}

/// The words of length `p` generating the points of `Per_p`: one word per
/// periodic point, so rotations of the same orbit are all listed.
pub fn periodic_orbit_words(alphabet: &Alphabet, p: usize, cap: u64) -> Result<Vec<Word>> {
    enumerate_words(alphabet, p, cap)
}

/// Letter-wise surjection `A -> B` with `Card(A) > Card(B) >= 2`.
#[derive(Clone, Debug)]
pub struct AmalgamationMap {
    source: Alphabet,
    target: Alphabet,
    table: Vec<u8>,
    fibers: Vec<Vec<u8>>,
}

impl AmalgamationMap {
    pub fn new(source: &Alphabet, target: &Alphabet, table: &[usize]) -> Result<Self> {
        if table.len() != source.size() {
            return Err(Error::InvalidAmalgamation(format!(
                "table has {} entries for a source alphabet of size {}",
                table.len(),
                source.size()
            )));
        }
        if source.size() <= target.size() {
            return Err(Error::InvalidAmalgamation(format!(
                "source alphabet ({}) must be strictly larger than target ({})",
                source.size(),
                target.size()
            )));
        }
        let mut fibers = vec![Vec::new(); target.size()];
        for (a, &b) in table.iter().enumerate() {
            if b >= target.size() {
                return Err(Error::LetterOutOfRange {
                    index: b,
                    size: target.size(),
                });
            }
            fibers[b].push(a as u8);
        }
        if let Some(missing) = fibers.iter().position(Vec::is_empty) {
            return Err(Error::NotSurjective(target.symbol(missing as u8).to_string()));
        }
        Ok(Self {
            source: source.clone(),
            target: target.clone(),
            table: table.iter().map(|&b| b as u8).collect(),
            fibers,
        })
    }

    /// Builds the map from `(source label, target label)` pairs.
    pub fn from_labels<S: AsRef<str>>(
        source: &Alphabet,
        target: &Alphabet,
        pairs: &[(S, S)],
    ) -> Result<Self> {
        let mut table: Vec<Option<usize>> = vec![None; source.size()];
        for (a, b) in pairs {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ai = source
                .index_of(a)
                .ok_or_else(|| Error::UnknownSymbol(a.to_string()))?;
            let bi = target
                .index_of(b)
                .ok_or_else(|| Error::UnknownSymbol(b.to_string()))?;
            if table[ai as usize].replace(bi as usize).is_some() {
                return Err(Error::InvalidAmalgamation(format!("symbol `{a}` mapped twice")));
            }
        }
        let table = table
            .iter()
            .enumerate()
            .map(|(i, t)| {
                t.ok_or_else(|| {
                    Error::InvalidAmalgamation(format!(
                        "source symbol `{}` is not mapped",
                        source.symbol(i as u8)
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(source, target, &table)
    }

    pub fn source(&self) -> &Alphabet {
        &self.source
    }

    pub fn target(&self) -> &Alphabet {
        &self.target
    }

    pub fn image(&self, a: u8) -> u8 {
        self.table[a as usize]
    }

    /// Preimage of a single target letter, ascending.
    pub fn fiber_letters(&self, b: u8) -> &[u8] {
        &self.fibers[b as usize]
    }

    pub fn amalgamate_letters(&self, letters: &[u8]) -> Vec<u8> {
        letters.iter().map(|&a| self.image(a)).collect()
    }

    pub fn amalgamate_word(&self, w: &Word) -> Result<Word> {
        if w.alphabet != self.source {
            return Err(Error::AlphabetMismatch);
        }
        Ok(Word {
            alphabet: self.target.clone(),
            letters: self.amalgamate_letters(&w.letters),
        })
    }

    /// Number of preimages of a target word.
    pub fn fiber_size(&self, b: &[u8]) -> u128 {
        b.iter()
            .map(|&l| self.fibers[l as usize].len() as u128)
            .product()
    }

    /// Preimages of `b` as letter sequences, lexicographic.
    pub fn fiber_letter_words(&self, b: &[u8], cap: u64) -> Result<Vec<Vec<u8>>> {
        let requested = self.fiber_size(b);
        if requested > cap as u128 {
            return Err(Error::EnumerationTooLarge { requested, cap });
        }
        let mut out = Vec::with_capacity(requested as usize);
        let mut digits = vec![0usize; b.len()];
        loop {
            out.push(
                digits
                    .iter()
                    .zip(b)
                    .map(|(&d, &l)| self.fibers[l as usize][d])
                    .collect(),
            );
            // odometer, last position fastest
            let mut pos = b.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < self.fibers[b[pos] as usize].len() {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }

    /// Base-`Card(A)` codes of the preimages of `b`, ascending.
    pub fn fiber_codes(&self, b: &[u8]) -> Vec<usize> {
        let k = self.source.size();
        let mut codes = vec![0usize];
        for &l in b {
            let letters = &self.fibers[l as usize];
            codes = codes
                .iter()
                .flat_map(|&c| letters.iter().map(move |&a| c * k + a as usize))
                .collect();
        }
        codes
    }

    /// The fiber `E_b` as words over the source alphabet.
    pub fn fiber(&self, b: &Word, cap: u64) -> Result<Vec<Word>> {
        if b.alphabet != self.target {
            return Err(Error::AlphabetMismatch);
        }
        Ok(self
            .fiber_letter_words(&b.letters, cap)?
            .into_iter()
            .map(|letters| Word {
                alphabet: self.source.clone(),
                letters,
            })
            .collect())
    }
}
