//! Tabular Q-learning over the frog-centered 7x7 observation window.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{new_game, step, Action, EnvConfig, GameState, Status};
use crate::error::{Error, Result};
use crate::serialize::{serialize_focused, Snapshot, SymbolAlphabet};

pub const OBSERVATION_WINDOW: usize = 7;
/// Largest absolute single-step reward under the environment's schedule.
pub const MAX_REWARD: f64 = 100.0;
/// Environment seeds at or above this offset are reserved for evaluation.
pub const EVAL_SEED_OFFSET: u64 = 1 << 32;

/// The 49 window symbols, row-major, as a string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationKey(pub String);

impl ObservationKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub fn observe(state: &GameState) -> ObservationKey {
    let snap = Snapshot::from_state(state);
    let symbols = serialize_focused(&snap, &SymbolAlphabet::default(), OBSERVATION_WINDOW)
        .expect("observation window is odd");
    ObservationKey(symbols.into_iter().collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    values: HashMap<ObservationKey, [f64; 4]>,
    visits: HashMap<ObservationKey, u64>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Action values for a key; unseen keys read as zeros.
    pub fn get(&self, key: &ObservationKey) -> [f64; 4] {
        self.values.get(key).copied().unwrap_or([0.0; 4])
    }

    pub fn value(&self, key: &ObservationKey, action: Action) -> f64 {
        self.get(key)[action.index()]
    }

    pub fn visits(&self, key: &ObservationKey) -> u64 {
        self.visits.get(key).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ObservationKey, &[f64; 4])> {
        self.values.iter()
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .values()
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn greedy(&self, key: &ObservationKey) -> Action {
        let q = self.get(key);
        let mut best = 0;
        for i in 1..4 {
            if q[i] > q[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }

    pub fn to_json(&self) -> Result<String> {
        let sorted: BTreeMap<&str, [f64; 4]> =
            self.values.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        Ok(serde_json::to_string(&sorted)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, [f64; 4]> = serde_json::from_str(text)?;
        let mut table = QTable::new();
        for (k, v) in map {
            if k.chars().count() != OBSERVATION_WINDOW * OBSERVATION_WINDOW {
                return Err(Error::Config(format!("observation key of wrong length: {k:?}")));
            }
            table.values.insert(ObservationKey(k), v);
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which epsilon decays linearly; `None` means 80% of `episodes`.
    pub epsilon_decay_episodes: Option<u64>,
    pub episodes: u64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            alpha: 0.1,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: None,
            episodes: 50_000,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.epsilon_start <= 1.0
            && self.epsilon_start >= self.epsilon_end
            && self.epsilon_end >= 0.0)
        {
            return Err(Error::Config("need 1 >= epsilon_start >= epsilon_end >= 0".into()));
        }
        Ok(())
    }

    pub fn q_bound(&self) -> f64 {
        MAX_REWARD / (1.0 - self.gamma)
    }

    pub fn epsilon_at(&self, episode: u64) -> f64 {
        let decay = self
            .epsilon_decay_episodes
            .unwrap_or((self.episodes as f64 * 0.8).round() as u64);
        if decay == 0 || episode >= decay {
            return self.epsilon_end;
        }
        let frac = episode as f64 / decay as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Watkins Q-learning update of a single (key, action) cell.
pub fn q_update(
    q: &mut QTable,
    s: &ObservationKey,
    a: Action,
    r: f64,
    s_next: &ObservationKey,
    terminal: bool,
    cfg: &AgentConfig,
) {
    let bootstrap = if terminal {
        0.0
    } else {
        q.get(s_next).into_iter().fold(f64::NEG_INFINITY, f64::max)
    };
    let entry = q.values.entry(s.clone()).or_insert([0.0; 4]);
    let old = entry[a.index()];
    entry[a.index()] = old + cfg.alpha * (r + cfg.gamma * bootstrap - old);
    *q.visits.entry(s.clone()).or_insert(0) += 1;
}

/// Epsilon-greedy choice; greedy ties go to the earliest action in `Action::ALL`.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, s: &ObservationKey, epsilon: f64, rng: &mut R) -> Action {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Action::ALL[rng.random_range(0..4)]
    } else {
        q.greedy(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub episodes: Vec<EpisodeStat>,
}

impl TrainStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,return,success\n");
        for e in &self.episodes {
            let _ = writeln!(out, "{},{},{}", e.episode, e.ret, u8::from(e.success));
        }
        out
    }

    /// Success fraction over the trailing `window` episodes.
    pub fn recent_success(&self, window: usize) -> f64 {
        let tail = &self.episodes[self.episodes.len().saturating_sub(window)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|e| e.success).count() as f64 / tail.len() as f64
    }
}

pub fn train_agent(env_cfg: &EnvConfig, cfg: &AgentConfig) -> Result<(QTable, TrainStats)> {
    env_cfg.validate()?;
    cfg.validate()?;
    let mut q = QTable::new();
    let mut stats = TrainStats::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon_at(episode);
        let mut state = new_game(&env_cfg.with_seed(env_cfg.seed.wrapping_add(episode)))?;
        let mut key = observe(&state);
        let mut ret = 0.0;
        loop {
            let action = select_action(&q, &key, epsilon, &mut rng);
            let (next, outcome) = step(&state, action)?;
            let next_key = observe(&next);
            q_update(&mut q, &key, action, outcome.reward, &next_key, outcome.terminal, cfg);
            ret += outcome.reward;
            state = next;
            key = next_key;
            if outcome.terminal {
                break;
            }
        }
        stats.episodes.push(EpisodeStat {
            episode,
            ret,
            success: state.status == Status::Won,
        });
    }
    Ok((q, stats))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<(GameState, Action)>,
    pub final_state: GameState,
}

/// Greedy (epsilon = 0) episode from a fresh game seeded with `seed`.
pub fn rollout(q: &QTable, env_cfg: &EnvConfig, seed: u64) -> Result<Trajectory> {
    let mut state = new_game(&env_cfg.with_seed(seed))?;
    let mut steps = Vec::new();
    while !state.is_terminal() {
        let action = q.greedy(&observe(&state));
        let (next, _) = step(&state, action)?;
        steps.push((state, action));
        state = next;
    }
    Ok(Trajectory { steps, final_state: state })
}

/// Fraction of `episodes` greedy games won, using evaluation-reserved seeds.
pub fn evaluate_greedy(q: &QTable, env_cfg: &EnvConfig, episodes: u64) -> Result<f64> {
    if episodes == 0 {
        return Ok(0.0);
    }
    let mut wins = 0;
    for i in 0..episodes {
        let t = rollout(q, env_cfg, EVAL_SEED_OFFSET + i)?;
        if t.final_state.status == Status::Won {
            wins += 1;
        }
    }
    Ok(wins as f64 / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Direction, LaneKind, LaneSpec, Pattern, Position};

    fn key(c: char) -> ObservationKey {
        ObservationKey(std::iter::repeat_n(c, 49).collect())
    }

    #[test]
    fn observation_on_empty_center() {
        let mut cfg = EnvConfig::default();
        for lane in &mut cfg.lanes {
            lane.kind = LaneKind::Median;
            lane.direction = Direction::None;
            lane.period = 0;
            lane.pattern = Pattern::default();
        }
        cfg.lanes[0].kind = LaneKind::Goal;
        cfg.lanes[10].kind = LaneKind::Start;
        let mut s = new_game(&cfg).unwrap();
        s.place_frog(Position::new(6, 5));
        let k = observe(&s);
        assert_eq!(k.as_str().chars().count(), 49);
        assert_eq!(k.as_str().chars().nth(24), Some('F'));
        assert_eq!(k.as_str().chars().filter(|&c| c == 'M').count(), 48);
    }

    #[test]
    fn corner_observation_padding() {
        let mut s = new_game(&EnvConfig::default()).unwrap();
        s.place_frog(Position::new(0, 0));
        let k = observe(&s);
        assert_eq!(k.as_str().chars().filter(|&c| c == '#').count(), 33);
        assert_eq!(k.as_str().chars().filter(|&c| c != '#').count(), 16);
        assert_eq!(observe(&s), k);
    }

    #[test]
    fn update_arithmetic() {
        let cfg = AgentConfig::default();
        let (s, s2) = (key('a'), key('b'));
        let mut q = QTable::new();
        q_update(&mut q, &s, Action::Up, 1.0, &s2, false, &cfg);
        assert!((q.value(&s, Action::Up) - 0.1).abs() < 1e-15);

        let mut q = QTable::new();
        q_update(&mut q, &s, Action::Left, -100.0, &s2, true, &cfg);
        assert!((q.value(&s, Action::Left) + 10.0).abs() < 1e-12);
        assert_eq!(q.get(&s)[0], 0.0);
        assert_eq!(q.visits(&s), 1);
    }

    #[test]
    fn zero_alpha_leaves_values_unchanged() {
        let cfg = AgentConfig { alpha: 0.0, ..AgentConfig::default() };
        let (s, s2) = (key('a'), key('b'));
        let mut q = QTable::new();
        q_update(&mut q, &s, Action::Up, 1.0, &s2, false, &AgentConfig::default());
        let before = q.get(&s);
        q_update(&mut q, &s, Action::Up, 50.0, &s2, false, &cfg);
        assert_eq!(q.get(&s), before);
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = key('x');
        let mut q = QTable::new();
        assert_eq!(select_action(&q, &s, 0.0, &mut rng), Action::Up);
        q.values.insert(s.clone(), [0.0, 0.0, 3.0, 3.0]);
        assert_eq!(select_action(&q, &s, 0.0, &mut rng), Action::Left);
        q.values.insert(s.clone(), [2.0, 0.0, 0.0, 0.0]);
        assert_eq!(select_action(&q, &s, 0.0, &mut rng), Action::Up);
    }

    #[test]
    fn uniform_exploration_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = QTable::new();
        let s = key('x');
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[select_action(&q, &s, 1.0, &mut rng).index()] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.25).abs() <= 0.01, "frequency {f}");
        }
    }

    #[test]
    fn zero_episodes_is_empty() {
        let cfg = AgentConfig { episodes: 0, ..AgentConfig::default() };
        let (q, stats) = train_agent(&EnvConfig::default(), &cfg).unwrap();
        assert!(q.is_empty());
        assert!(stats.episodes.is_empty());
    }

    #[test]
    fn empty_table_rollout_only_moves_up() {
        let t = rollout(&QTable::new(), &EnvConfig::default(), 3).unwrap();
        assert!(t.final_state.is_terminal());
        assert!(t.steps.iter().all(|(_, a)| *a == Action::Up));
        assert!(t.steps.len() as u64 <= EnvConfig::default().max_steps);
    }

    #[test]
    fn trivial_board_learns_to_go_up() {
        // Goal directly above the start row; nothing can kill the frog.
        let mut lanes = vec![LaneSpec {
            kind: LaneKind::Median,
            direction: Direction::None,
            period: 0,
            pattern: Pattern::default(),
        }; 7];
        lanes[5].kind = LaneKind::Goal;
        lanes[6].kind = LaneKind::Start;
        let env = EnvConfig { width: 7, height: 7, lanes, lives_initial: 1, max_steps: 20, seed: 0 };
        let cfg = AgentConfig { episodes: 100, ..AgentConfig::default() };
        let (q, _) = train_agent(&env, &cfg).unwrap();
        let start = new_game(&env).unwrap();
        assert_eq!(q.greedy(&observe(&start)), Action::Up);
        let v = q.get(&observe(&start));
        assert!(v[0] > v[1] && v[0] > v[2] && v[0] > v[3]);
    }

    #[test]
    fn training_is_deterministic_and_bounded() {
        let cfg = AgentConfig { episodes: 300, seed: 5, ..AgentConfig::default() };
        let env = EnvConfig::default();
        let (q1, s1) = train_agent(&env, &cfg).unwrap();
        let (q2, s2) = train_agent(&env, &cfg).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(s1, s2);
        assert!(q1.max_abs() <= cfg.q_bound());
        let a = rollout(&q1, &env, 11).unwrap();
        let b = rollout(&q1, &env, 11).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(
            a.steps.iter().map(|(_, x)| *x).collect::<Vec<_>>(),
            b.steps.iter().map(|(_, x)| *x).collect::<Vec<_>>()
        );
    }

    #[test]
    fn json_round_trip_and_csv() {
        let cfg = AgentConfig { episodes: 20, ..AgentConfig::default() };
        let (q, stats) = train_agent(&EnvConfig::default(), &cfg).unwrap();
        let back = QTable::from_json(&q.to_json().unwrap()).unwrap();
        assert_eq!(back.len(), q.len());
        for (k, v) in q.iter() {
            assert_eq!(back.get(k), *v);
        }
        let csv = stats.to_csv();
        assert_eq!(csv.lines().count(), 21);
        assert!(csv.starts_with("episode,return,success\n"));
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = AgentConfig { episodes: 100, ..AgentConfig::default() };
        assert_eq!(cfg.epsilon_at(0), 1.0);
        assert!((cfg.epsilon_at(40) - 0.525).abs() < 1e-12);
        assert_eq!(cfg.epsilon_at(80), 0.05);
        assert_eq!(cfg.epsilon_at(99), 0.05);
    }
}
