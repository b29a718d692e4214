//! Synthetic corpora whose rationales come from a deterministic template
//! oracle over the frog's 7x7 neighbourhood.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CorpusRecord;
use crate::env::{new_game, step, Action, EnvConfig, Sprite};
use crate::error::Result;
use crate::serialize::{focused_window, Snapshot};

const WINDOW: usize = 7;
const HALF: i64 = 3;
/// Probability of moving up under the exploration policy; the rest is split
/// evenly between the other three actions.
const UP_BIAS: f64 = 0.55;

fn at(window: &[Sprite], dr: i64, dc: i64) -> Sprite {
    let r = (dr + HALF) as usize;
    let c = (dc + HALF) as usize;
    window[r * WINDOW + c]
}

/// Rationale for taking `action` given the frog-centered 7x7 window.
///
/// Rules are checked in order: goal straight ahead, nearest car within
/// Manhattan distance 2 (left, right, ahead, behind at each distance), the
/// cell above being water / log / median, an adjacent board edge, and
/// finally the clear-path fallback.
pub fn template_rationale(window: &[Sprite], action: Action) -> String {
    assert_eq!(window.len(), WINDOW * WINDOW, "template oracle needs a 7x7 window");
    let dir = action.name();
    let above = at(window, -1, 0);

    if action == Action::Up && above == Sprite::Goal {
        return "going up takes me straight into the goal".to_string();
    }
    for d in 1..=2 {
        if at(window, 0, -d) == Sprite::Car {
            return format!("i moved {dir} because there is a car to my left");
        }
        if at(window, 0, d) == Sprite::Car {
            return format!("a car on my right made me go {dir}");
        }
        if at(window, -d, 0) == Sprite::Car {
            return format!("i went {dir} since a car is coming in the lane above");
        }
        if at(window, d, 0) == Sprite::Car {
            return format!("with a car close behind me i jumped {dir}");
        }
    }
    match above {
        Sprite::Water => return format!("there is only water above so i stepped {dir}"),
        Sprite::Log => return format!("i hopped {dir} with a log floating just above me"),
        Sprite::Median => return format!("the safe median is above me and i moved {dir}"),
        _ => {}
    }
    if at(window, 0, -1) == Sprite::OutOfBounds {
        return format!("the left edge is next to me so i moved {dir}");
    }
    if at(window, 0, 1) == Sprite::OutOfBounds {
        return format!("staying clear of the right edge i went {dir}");
    }
    format!("i moved {dir} because the path ahead is clear")
}

/// `n` records from upward-biased random play, each labelled by
/// [`template_rationale`]. A pure function of its arguments.
pub fn synth_corpus(env_cfg: &EnvConfig, n: usize, seed: u64) -> Result<Vec<CorpusRecord>> {
    env_cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut state = new_game(&env_cfg.with_seed(rng.random()))?;
        while !state.is_terminal() && out.len() < n {
            let action = if rng.random::<f64>() < UP_BIAS {
                Action::Up
            } else {
                [Action::Down, Action::Left, Action::Right][rng.random_range(0..3)]
            };
            let window = focused_window(&Snapshot::from_state(&state), WINDOW)?;
            let rationale = template_rationale(&window, action);
            out.push(CorpusRecord::from_state(format!("synth-{:05}", out.len()), &state, action, rationale));
            state = step(&state, action)?.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::BoardDims;
    use crate::serialize::SymbolAlphabet;
    use std::collections::HashMap;

    fn blank() -> Vec<Sprite> {
        let mut w = vec![Sprite::Empty; 49];
        w[24] = Sprite::Frog;
        w
    }

    fn set(w: &mut [Sprite], dr: i64, dc: i64, s: Sprite) {
        w[((dr + 3) * 7 + dc + 3) as usize] = s;
    }

    #[test]
    fn car_to_the_left() {
        let mut w = blank();
        set(&mut w, 0, -1, Sprite::Car);
        assert_eq!(template_rationale(&w, Action::Right), "i moved right because there is a car to my left");
    }

    #[test]
    fn clear_window() {
        assert_eq!(template_rationale(&blank(), Action::Up), "i moved up because the path ahead is clear");
    }

    #[test]
    fn rule_priorities() {
        let mut w = blank();
        set(&mut w, -1, 0, Sprite::Goal);
        set(&mut w, 0, 1, Sprite::Car);
        assert_eq!(template_rationale(&w, Action::Up), "going up takes me straight into the goal");
        assert_eq!(template_rationale(&w, Action::Left), "a car on my right made me go left");

        let mut w = blank();
        set(&mut w, 0, -2, Sprite::Car);
        set(&mut w, -1, 0, Sprite::Car);
        assert_eq!(template_rationale(&w, Action::Down), "i went down since a car is coming in the lane above");

        let mut w = blank();
        set(&mut w, -1, 0, Sprite::Log);
        set(&mut w, 0, -1, Sprite::OutOfBounds);
        assert_eq!(template_rationale(&w, Action::Up), "i hopped up with a log floating just above me");

        let mut w = blank();
        set(&mut w, 0, 1, Sprite::OutOfBounds);
        assert_eq!(template_rationale(&w, Action::Left), "staying clear of the right edge i went left");
    }

    #[test]
    fn corpus_is_pure_and_oracle_consistent() {
        let cfg = EnvConfig::default();
        let a = synth_corpus(&cfg, 300, 4).unwrap();
        assert_eq!(a, synth_corpus(&cfg, 300, 4).unwrap());
        assert_ne!(a, synth_corpus(&cfg, 300, 5).unwrap());
        assert!(synth_corpus(&cfg, 0, 4).unwrap().is_empty());

        let dims = BoardDims::default();
        let alpha = SymbolAlphabet::default();
        let mut seen: HashMap<(Vec<Sprite>, Action), String> = HashMap::new();
        for r in &a {
            let snap = r.snapshot(&dims, &alpha).unwrap();
            let w = focused_window(&snap, 7).unwrap();
            assert_eq!(template_rationale(&w, r.action), r.rationale);
            if let Some(prev) = seen.insert((w, r.action), r.rationale.clone()) {
                assert_eq!(prev, r.rationale);
            }
        }
        // The exploration policy should reach the river, not just the road.
        assert!(a.iter().any(|r| r.frog_position().row < 5));
    }
}
