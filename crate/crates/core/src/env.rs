//! Turn-based Frogger gridworld.
//!
//! The world advances exactly one tick per player action. Within a tick the
//! frog moves first, then every lane due to shift rotates its row, then
//! collisions and drownings are resolved against the shifted board.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const DEFAULT_ENV_JSON: &str = include_str!("../assets/default_env.json");

pub const GOAL_REWARD: f64 = 100.0;
pub const DEATH_REWARD: f64 = -100.0;
pub const PROGRESS_REWARD: f64 = 1.0;
pub const RETREAT_REWARD: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sprite {
    Empty,
    Car,
    Log,
    Water,
    Median,
    Goal,
    Frog,
    OutOfBounds,
}

impl Sprite {
    pub const ALL: [Sprite; 8] = [
        Sprite::Empty,
        Sprite::Car,
        Sprite::Log,
        Sprite::Water,
        Sprite::Median,
        Sprite::Goal,
        Sprite::Frog,
        Sprite::OutOfBounds,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    /// Fixed order, also used for greedy tie-breaking.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }

    fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Ok(Action::Up),
            "down" => Ok(Action::Down),
            "left" => Ok(Action::Left),
            "right" => Ok(Action::Right),
            other => Err(Error::Config(format!("unknown action {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneKind {
    Goal,
    Water,
    Median,
    Road,
    Start,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
    #[default]
    None,
}

/// Cyclic occupancy pattern of a lane; serialized as a string of `0`/`1`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Pattern(pub Vec<bool>);

impl Pattern {
    pub fn occupied(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let text: String = self.0.iter().map(|&b| if b { '1' } else { '0' }).collect();
        s.serialize_str(&text)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(serde::de::Error::custom(format!(
                    "pattern symbol {other:?} is not 0 or 1"
                ))),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Pattern)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSpec {
    pub kind: LaneKind,
    #[serde(default)]
    pub direction: Direction,
    /// Ticks per one-cell shift; 0 means static.
    #[serde(default)]
    pub period: u32,
    #[serde(default, skip_serializing_if = "pattern_is_empty")]
    pub pattern: Pattern,
}

fn pattern_is_empty(p: &Pattern) -> bool {
    p.0.is_empty()
}

impl LaneSpec {
    fn sprite(&self, occupied: bool) -> Sprite {
        match (self.kind, occupied) {
            (LaneKind::Goal, _) => Sprite::Goal,
            (LaneKind::Median, _) => Sprite::Median,
            (LaneKind::Start, _) => Sprite::Empty,
            (LaneKind::Water, true) => Sprite::Log,
            (LaneKind::Water, false) => Sprite::Water,
            (LaneKind::Road, true) => Sprite::Car,
            (LaneKind::Road, false) => Sprite::Empty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    pub lanes: Vec<LaneSpec>,
    pub lives_initial: u32,
    pub max_steps: u64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_ENV_JSON).expect("embedded default board is valid JSON")
    }
}

impl EnvConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: EnvConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        EnvConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn dims(&self) -> BoardDims {
        BoardDims {
            width: self.width,
            height: self.height,
            lives_initial: self.lives_initial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.width < 7 || self.height < 7 {
            return bad(format!(
                "board must be at least 7x7, got {}x{}",
                self.width, self.height
            ));
        }
        if self.lanes.len() != self.height {
            return bad(format!(
                "expected one lane per row ({}), got {}",
                self.height,
                self.lanes.len()
            ));
        }
        if self.lives_initial == 0 {
            return bad("lives_initial must be at least 1".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        let count = |kind| self.lanes.iter().filter(|l| l.kind == kind).count();
        if count(LaneKind::Goal) != 1 {
            return bad(format!("exactly one goal row required, found {}", count(LaneKind::Goal)));
        }
        if count(LaneKind::Start) != 1 {
            return bad(format!("exactly one start row required, found {}", count(LaneKind::Start)));
        }
        for (row, lane) in self.lanes.iter().enumerate() {
            match lane.kind {
                LaneKind::Goal | LaneKind::Median | LaneKind::Start => {
                    if lane.direction != Direction::None || lane.period != 0 || !lane.pattern.0.is_empty() {
                        return bad(format!("row {row}: {:?} lanes must be static and patternless", lane.kind));
                    }
                }
                LaneKind::Water | LaneKind::Road => {
                    if lane.pattern.0.len() != self.width {
                        return bad(format!(
                            "row {row}: pattern length {} differs from width {}",
                            lane.pattern.0.len(),
                            self.width
                        ));
                    }
                    if (lane.period == 0) != (lane.direction == Direction::None) {
                        return bad(format!("row {row}: period 0 must go with direction none"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn goal_row(&self) -> usize {
        self.lanes.iter().position(|l| l.kind == LaneKind::Goal).unwrap_or(0)
    }

    pub fn start_row(&self) -> usize {
        self.lanes
            .iter()
            .position(|l| l.kind == LaneKind::Start)
            .unwrap_or(self.height - 1)
    }

    pub fn start_position(&self) -> Position {
        Position {
            col: self.width / 2,
            row: self.start_row(),
        }
    }
}

/// Board facts needed to interpret a serialized snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardDims {
    pub width: usize,
    pub height: usize,
    pub lives_initial: u32,
}

impl Default for BoardDims {
    fn default() -> Self {
        EnvConfig::default().dims()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Position {
    pub col: usize,
    pub row: usize,
}

impl Position {
    pub fn new(col: usize, row: usize) -> Self {
        Position { col, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Won,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Moved,
    BlockedByWall,
    Died,
    ReachedGoal,
    CarriedByLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub event: Event,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    config: Arc<EnvConfig>,
    /// Row-major background sprites, without the frog overlay.
    cells: Vec<Sprite>,
    pub frog: Position,
    pub lives: u32,
    pub tick: u64,
    pub status: Status,
    pub last_action: Option<Action>,
    best_distance: usize,
    retreated_from: Vec<bool>,
}

pub fn new_game(config: &EnvConfig) -> Result<GameState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cells = Vec::with_capacity(config.width * config.height);
    for lane in &config.lanes {
        let mut row: Vec<bool> = if lane.pattern.0.is_empty() {
            vec![false; config.width]
        } else {
            lane.pattern.0.clone()
        };
        if lane.period > 0 {
            let phase = rng.random_range(0..config.width);
            row.rotate_left(phase);
        }
        cells.extend(row.into_iter().map(|b| lane.sprite(b)));
    }
    let frog = config.start_position();
    let best_distance = frog.row.abs_diff(config.goal_row());
    Ok(GameState {
        cells,
        frog,
        lives: config.lives_initial,
        tick: 0,
        status: Status::Running,
        last_action: None,
        best_distance,
        retreated_from: vec![false; config.height],
        config: Arc::new(config.clone()),
    })
}

impl GameState {
    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    /// Background sprite at a cell (the frog is not overlaid).
    pub fn cell(&self, pos: Position) -> Sprite {
        self.cells[pos.row * self.config.width + pos.col]
    }

    /// Sprite as seen by an observer: the frog's cell shows [`Sprite::Frog`].
    pub fn visible(&self, pos: Position) -> Sprite {
        if pos == self.frog {
            Sprite::Frog
        } else {
            self.cell(pos)
        }
    }

    /// Overwrites a background cell. Intended for building test scenarios.
    pub fn set_cell(&mut self, pos: Position, sprite: Sprite) {
        let w = self.config.width;
        self.cells[pos.row * w + pos.col] = sprite;
    }

    /// Moves the frog without advancing the world. Intended for building test scenarios.
    pub fn place_frog(&mut self, pos: Position) {
        assert!(pos.col < self.width() && pos.row < self.height(), "frog off board");
        self.frog = pos;
        let d = pos.row.abs_diff(self.config.goal_row());
        self.best_distance = self.best_distance.min(d);
    }

    pub fn is_terminal(&self) -> bool {
        self.status != Status::Running
    }

    fn row_mut(&mut self, row: usize) -> &mut [Sprite] {
        let w = self.config.width;
        &mut self.cells[row * w..(row + 1) * w]
    }

    fn lose_life(&mut self) {
        self.lives = self.lives.saturating_sub(1);
        self.frog = self.config.start_position();
    }
}

pub fn step(state: &GameState, action: Action) -> Result<(GameState, StepOutcome)> {
    if state.is_terminal() {
        return Err(Error::IllegalTransition(format!(
            "cannot step a finished episode (status {:?})",
            state.status
        )));
    }
    let mut next = state.clone();
    let cfg = Arc::clone(&state.config);
    let goal_row = cfg.goal_row();
    let mut reward = 0.0;

    let (dc, dr) = action.delta();
    let col = state.frog.col as i64 + dc;
    let row = state.frog.row as i64 + dr;
    let blocked = col < 0 || row < 0 || col >= cfg.width as i64 || row >= cfg.height as i64;
    if !blocked {
        next.frog = Position::new(col as usize, row as usize);
        let before = state.frog.row.abs_diff(goal_row);
        let after = next.frog.row.abs_diff(goal_row);
        if after < next.best_distance && next.frog.row != goal_row {
            next.best_distance = after;
            reward += PROGRESS_REWARD;
        } else if after > before && !next.retreated_from[state.frog.row] {
            next.retreated_from[state.frog.row] = true;
            reward += RETREAT_REWARD;
        }
    }
    next.tick += 1;
    next.last_action = Some(action);

    let frog_row = next.frog.row;
    let riding = cfg.lanes[frog_row].kind == LaneKind::Water && next.cell(next.frog) == Sprite::Log;

    let mut carried = false;
    let mut carried_off = false;
    for (r, lane) in cfg.lanes.iter().enumerate() {
        if lane.period == 0 || !next.tick.is_multiple_of(lane.period as u64) {
            continue;
        }
        match lane.direction {
            Direction::Left => next.row_mut(r).rotate_left(1),
            Direction::Right => next.row_mut(r).rotate_right(1),
            Direction::None => {}
        }
        if riding && r == frog_row {
            carried = true;
            match lane.direction {
                Direction::Left if next.frog.col == 0 => carried_off = true,
                Direction::Left => next.frog.col -= 1,
                Direction::Right if next.frog.col + 1 == cfg.width => carried_off = true,
                Direction::Right => next.frog.col += 1,
                Direction::None => carried = false,
            }
        }
    }

    let died = carried_off
        || match cfg.lanes[next.frog.row].kind {
            LaneKind::Road => next.cell(next.frog) == Sprite::Car,
            LaneKind::Water => next.cell(next.frog) != Sprite::Log,
            _ => false,
        };

    let event = if died {
        // A fatal move earns no shaping.
        reward = DEATH_REWARD;
        next.best_distance = state.best_distance;
        next.retreated_from.clone_from(&state.retreated_from);
        next.lose_life();
        if next.lives == 0 {
            next.status = Status::Lost;
        }
        Event::Died
    } else if next.frog.row == goal_row {
        reward += GOAL_REWARD;
        next.status = Status::Won;
        Event::ReachedGoal
    } else if carried {
        Event::CarriedByLog
    } else if blocked {
        Event::BlockedByWall
    } else {
        Event::Moved
    };

    if next.status == Status::Running && next.tick >= cfg.max_steps {
        next.status = Status::Lost;
    }
    let terminal = next.is_terminal();
    Ok((next, StepOutcome { reward, event, terminal }))
}

/// ASCII board with the default alphabet; one line per row.
pub fn render_ascii(state: &GameState) -> String {
    let alphabet = crate::serialize::SymbolAlphabet::default();
    let mut out = String::with_capacity((state.width() + 1) * state.height());
    for row in 0..state.height() {
        for col in 0..state.width() {
            out.push(alphabet.symbol(state.visible(Position::new(col, row))));
        }
        out.push('\n');
    }
    out
}
