//! Game state to model-input symbol sequences.
//!
//! Two views are supported: a frog-centered square window (focused) and the
//! whole board, optionally corrupted with dummy symbols at training time
//! (complete). Both end with four context tokens: frog column, frog row, the
//! action, and remaining lives.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, BoardDims, GameState, Position, Sprite};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolAlphabet {
    pub empty: char,
    pub car: char,
    pub log: char,
    pub water: char,
    pub median: char,
    pub goal: char,
    pub frog: char,
    pub out_of_bounds: char,
    pub dummy: char,
}

impl Default for SymbolAlphabet {
    fn default() -> Self {
        SymbolAlphabet {
            empty: '.',
            car: 'C',
            log: 'L',
            water: 'W',
            median: 'M',
            goal: 'G',
            frog: 'F',
            out_of_bounds: '#',
            dummy: '?',
        }
    }
}

impl SymbolAlphabet {
    pub fn from_json(text: &str) -> Result<Self> {
        let a: SymbolAlphabet = serde_json::from_str(text)?;
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in self.symbols() {
            if c.is_whitespace() || !seen.insert(c) {
                return Err(Error::Config(format!("alphabet symbol {c:?} is repeated or blank")));
            }
        }
        Ok(())
    }

    pub fn symbol(&self, sprite: Sprite) -> char {
        match sprite {
            Sprite::Empty => self.empty,
            Sprite::Car => self.car,
            Sprite::Log => self.log,
            Sprite::Water => self.water,
            Sprite::Median => self.median,
            Sprite::Goal => self.goal,
            Sprite::Frog => self.frog,
            Sprite::OutOfBounds => self.out_of_bounds,
        }
    }

    pub fn sprite(&self, symbol: char) -> Option<Sprite> {
        Sprite::ALL.into_iter().find(|&s| self.symbol(s) == symbol)
    }

    /// Every sprite symbol followed by the dummy symbol.
    pub fn symbols(&self) -> Vec<char> {
        let mut v: Vec<char> = Sprite::ALL.iter().map(|&s| self.symbol(s)).collect();
        v.push(self.dummy);
        v
    }
}

/// Board contents as seen by the serializer. Built from a live [`GameState`]
/// or from a stored corpus record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub width: usize,
    pub height: usize,
    /// Row-major sprites; the frog's cell is rendered as `Frog` regardless.
    pub cells: Vec<Sprite>,
    pub frog: Position,
    pub lives: u32,
}

impl Snapshot {
    pub fn from_state(state: &GameState) -> Snapshot {
        let mut cells = Vec::with_capacity(state.width() * state.height());
        for row in 0..state.height() {
            for col in 0..state.width() {
                cells.push(state.visible(Position::new(col, row)));
            }
        }
        Snapshot {
            width: state.width(),
            height: state.height(),
            cells,
            frog: state.frog,
            lives: state.lives,
        }
    }

    /// Parses a row-major symbol string such as the `grid` field of a corpus record.
    pub fn from_grid(
        grid: &str,
        width: usize,
        height: usize,
        frog: Position,
        lives: u32,
        alphabet: &SymbolAlphabet,
    ) -> Result<Snapshot> {
        let cells = grid
            .chars()
            .map(|c| {
                alphabet
                    .sprite(c)
                    .ok_or_else(|| Error::Config(format!("grid symbol {c:?} is not in the alphabet")))
            })
            .collect::<Result<Vec<_>>>()?;
        if cells.len() != width * height {
            return Err(Error::Shape(format!(
                "grid has {} symbols, board is {width}x{height}",
                cells.len()
            )));
        }
        if frog.col >= width || frog.row >= height {
            return Err(Error::Shape(format!("frog {frog:?} outside {width}x{height} board")));
        }
        Ok(Snapshot { width, height, cells, frog, lives })
    }

    pub fn visible(&self, col: i64, row: i64) -> Sprite {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return Sprite::OutOfBounds;
        }
        let pos = Position::new(col as usize, row as usize);
        if pos == self.frog {
            Sprite::Frog
        } else {
            self.cells[pos.row * self.width + pos.col]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewMode {
    Focused,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewConfig {
    pub mode: ViewMode,
    pub window: usize,
    pub noise_prob: f64,
}

impl ViewConfig {
    pub fn focused() -> Self {
        ViewConfig { mode: ViewMode::Focused, window: 7, noise_prob: 0.2 }
    }

    pub fn complete() -> Self {
        ViewConfig { mode: ViewMode::Complete, window: 7, noise_prob: 0.2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("window must be odd and >= 3, got {}", self.window)));
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return Err(Error::Config(format!("noise_prob {} outside [0, 1]", self.noise_prob)));
        }
        Ok(())
    }

    pub fn grid_len(&self, dims: &BoardDims) -> usize {
        match self.mode {
            ViewMode::Focused => self.window * self.window,
            ViewMode::Complete => dims.width * dims.height,
        }
    }
}

/// The model input: grid symbols followed by the context tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSequence {
    pub grid_symbols: Vec<char>,
    pub frog_col_token: String,
    pub frog_row_token: String,
    pub action_token: String,
    pub lives_token: String,
}

impl InputSequence {
    pub fn token_count(&self) -> usize {
        self.grid_symbols.len() + 4
    }

    pub fn tokens(&self) -> Vec<String> {
        let mut out: Vec<String> = self.grid_symbols.iter().map(|c| c.to_string()).collect();
        out.push(self.frog_col_token.clone());
        out.push(self.frog_row_token.clone());
        out.push(self.action_token.clone());
        out.push(self.lives_token.clone());
        out
    }
}

pub fn col_token(col: usize) -> String {
    format!("COL_{col}")
}

pub fn row_token(row: usize) -> String {
    format!("ROW_{row}")
}

pub fn action_token(action: Action) -> String {
    format!("ACT_{}", action.name().to_ascii_uppercase())
}

pub fn lives_token(lives: u32) -> String {
    format!("LIVES_{lives}")
}

/// Every token an input sequence can contain for boards of the given size,
/// in a fixed order.
pub fn input_token_set(dims: &BoardDims, alphabet: &SymbolAlphabet) -> Vec<String> {
    let mut out: Vec<String> = alphabet.symbols().iter().map(|c| c.to_string()).collect();
    out.extend((0..dims.width).map(col_token));
    out.extend((0..dims.height).map(row_token));
    out.extend(Action::ALL.iter().map(|&a| action_token(a)));
    out.extend((0..=dims.lives_initial).map(lives_token));
    out
}

pub fn serialize_full(snapshot: &Snapshot, alphabet: &SymbolAlphabet) -> Vec<char> {
    let mut out = Vec::with_capacity(snapshot.width * snapshot.height);
    for row in 0..snapshot.height as i64 {
        for col in 0..snapshot.width as i64 {
            out.push(alphabet.symbol(snapshot.visible(col, row)));
        }
    }
    out
}

pub fn serialize_focused(snapshot: &Snapshot, alphabet: &SymbolAlphabet, window: usize) -> Result<Vec<char>> {
    Ok(focused_window(snapshot, window)?
        .into_iter()
        .map(|s| alphabet.symbol(s))
        .collect())
}

/// The frog-centered `window x window` block of sprites, row-major, padded
/// with `OutOfBounds` beyond the board.
pub fn focused_window(snapshot: &Snapshot, window: usize) -> Result<Vec<Sprite>> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Config(format!("window must be odd and >= 3, got {window}")));
    }
    let half = (window / 2) as i64;
    let (fc, fr) = (snapshot.frog.col as i64, snapshot.frog.row as i64);
    let mut out = Vec::with_capacity(window * window);
    for dr in -half..=half {
        for dc in -half..=half {
            out.push(snapshot.visible(fc + dc, fr + dr));
        }
    }
    Ok(out)
}

/// Replaces each non-frog symbol by `dummy` with probability `noise_prob`.
/// Consumes exactly one uniform draw per non-frog symbol.
pub fn apply_noise<R: Rng + ?Sized>(
    symbols: &[char],
    noise_prob: f64,
    dummy: char,
    frog: char,
    rng: &mut R,
) -> Vec<char> {
    symbols
        .iter()
        .map(|&c| {
            if c != frog && rng.random::<f64>() < noise_prob {
                dummy
            } else {
                c
            }
        })
        .collect()
}

/// Builds the model input for one (state, action) pair. Noise is applied only
/// for the complete view when `training` is set.
pub fn build_input<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    action: Action,
    view: &ViewConfig,
    alphabet: &SymbolAlphabet,
    training: bool,
    rng: &mut R,
) -> Result<InputSequence> {
    view.validate()?;
    let grid_symbols = match view.mode {
        ViewMode::Focused => serialize_focused(snapshot, alphabet, view.window)?,
        ViewMode::Complete => {
            let full = serialize_full(snapshot, alphabet);
            if training && view.noise_prob > 0.0 {
                apply_noise(&full, view.noise_prob, alphabet.dummy, alphabet.frog, rng)
            } else {
                full
            }
        }
    };
    Ok(InputSequence {
        grid_symbols,
        frog_col_token: col_token(snapshot.frog.col),
        frog_row_token: row_token(snapshot.frog.row),
        action_token: action_token(action),
        lives_token: lives_token(snapshot.lives),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{new_game, EnvConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snapshot_at(col: usize, row: usize) -> Snapshot {
        let mut s = new_game(&EnvConfig::default()).unwrap();
        s.place_frog(Position::new(col, row));
        Snapshot::from_state(&s)
    }

    #[test]
    fn full_view_shape_and_overlay() {
        let snap = snapshot_at(6, 10);
        let a = SymbolAlphabet::default();
        let full = serialize_full(&snap, &a);
        assert_eq!(full.len(), 143);
        assert_eq!(full[10 * 13 + 6], 'F');
        assert_eq!(full.iter().filter(|&&c| c == 'F').count(), 1);
        // Start row is otherwise empty, goal row is all goal.
        assert!(full[130..143].iter().enumerate().all(|(i, &c)| c == if i == 6 { 'F' } else { '.' }));
        assert!(full[0..13].iter().all(|&c| c == 'G'));
        assert_eq!(full, serialize_full(&snap, &a));
    }

    #[test]
    fn focused_window_centered_on_frog() {
        let a = SymbolAlphabet::default();
        for (c, r) in [(6, 10), (0, 0), (12, 5), (3, 3)] {
            let w = serialize_focused(&snapshot_at(c, r), &a, 7).unwrap();
            assert_eq!(w.len(), 49);
            assert_eq!(w[24], 'F');
        }
    }

    #[test]
    fn corner_window_padding_count() {
        let a = SymbolAlphabet::default();
        let w = serialize_focused(&snapshot_at(0, 0), &a, 7).unwrap();
        assert_eq!(w.iter().filter(|&&c| c == '#').count(), 33);
    }

    #[test]
    fn small_interior_window_has_no_padding() {
        let a = SymbolAlphabet::default();
        let w = serialize_focused(&snapshot_at(6, 5), &a, 3).unwrap();
        assert_eq!(w.len(), 9);
        assert!(!w.contains(&'#'));
    }

    #[test]
    fn even_window_rejected() {
        let a = SymbolAlphabet::default();
        assert!(matches!(serialize_focused(&snapshot_at(6, 5), &a, 6), Err(Error::Config(_))));
    }

    #[test]
    fn noise_extremes() {
        let a = SymbolAlphabet::default();
        let full = serialize_full(&snapshot_at(6, 10), &a);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(apply_noise(&full, 0.0, '?', 'F', &mut rng), full);
        let all = apply_noise(&full, 1.0, '?', 'F', &mut rng);
        assert!(all.iter().all(|&c| c == '?' || c == 'F'));
        assert_eq!(all[136], 'F');
    }

    #[test]
    fn input_lengths_per_view() {
        let a = SymbolAlphabet::default();
        let snap = snapshot_at(6, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = build_input(&snap, Action::Up, &ViewConfig::focused(), &a, true, &mut rng).unwrap();
        assert_eq!(f.token_count(), 53);
        let c = build_input(&snap, Action::Up, &ViewConfig::complete(), &a, false, &mut rng).unwrap();
        assert_eq!(c.token_count(), 147);
        assert_eq!(c.grid_symbols, serialize_full(&snap, &a));
        assert_eq!(
            &c.tokens()[143..],
            &["COL_6", "ROW_10", "ACT_UP", "LIVES_3"].map(String::from)
        );
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let a = SymbolAlphabet::default();
        let snap = snapshot_at(6, 10);
        let view = ViewConfig::complete();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            build_input(&snap, Action::Left, &view, &a, true, &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9).grid_symbols, serialize_full(&snap, &a));
    }

    #[test]
    fn alphabet_rejects_duplicates() {
        let mut a = SymbolAlphabet::default();
        a.dummy = '.';
        assert!(a.validate().is_err());
        assert!(SymbolAlphabet::default().validate().is_ok());
    }

    #[test]
    fn grid_string_round_trip() {
        let a = SymbolAlphabet::default();
        let snap = snapshot_at(4, 7);
        let grid: String = serialize_full(&snap, &a).into_iter().collect();
        let back = Snapshot::from_grid(&grid, 13, 11, snap.frog, snap.lives, &a).unwrap();
        assert_eq!(serialize_full(&back, &a), serialize_full(&snap, &a));
        assert!(Snapshot::from_grid(&grid[1..], 13, 11, snap.frog, 3, &a).is_err());
    }
}
