//! Scenario files: a TOML description of game, graph, players, mode,
//! initial conditions and integrator settings.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CanonicalForm, PlayerSpec};
use crate::error::{Assumption, Error, Result};
use crate::game::{ring_game, QuadraticGame};
use crate::graph::{default_cycle, Digraph};
use crate::seeker::{PlayerLaw, SeekerMode};
use crate::sim::{Scenario, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub game: GameConfig,
    pub graph: GraphConfig,
    pub players: PlayersConfig,
    pub mode: SeekerMode,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub sim: SimConfig,
    /// Seed for randomized replicates.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_large_theta: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameConfig {
    Ring {
        n: usize,
    },
    Explicit {
        jacobian: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    /// `a_{i,i-1} = 1`; with `symmetric` the reverse arcs are added too.
    Cycle {
        n: usize,
        #[serde(default)]
        symmetric: bool,
    },
    /// `weights[i][j] > 0` when player `i` receives from `j`.
    Explicit { weights: Vec<Vec<f64>> },
}

/// One entry per player, or a single table shared by all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlayersConfig {
    Each(Vec<PlayerConfig>),
    Uniform(PlayerConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerConfig {
    pub order: usize,
    pub theta: f64,
    /// Saturation level. Exactly one of `delta` and `auto_delta_margin`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Pick `delta` so the certified bound equals `margin * u_limit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_delta_margin: Option<f64>,
    pub u_limit: f64,
    #[serde(default)]
    pub form: CanonicalForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fill {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// Per-player plant state `(y, y', ...)`; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<Vec<f64>>>,
    #[serde(default = "zero_fill")]
    pub z0: Fill,
    #[serde(default = "unit_fill")]
    pub c0: Fill,
}

fn zero_fill() -> Fill {
    Fill::Scalar(0.0)
}

fn unit_fill() -> Fill {
    Fill::Scalar(1.0)
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            x0: None,
            z0: zero_fill(),
            c0: unit_fill(),
        }
    }
}

/// A validated configuration and the scenario it describes.
#[derive(Debug, Clone)]
pub struct Resolved {
    /// The input with every default written out.
    pub config: ScenarioConfig,
    pub scenario: Scenario<f64, QuadraticGame<f64>>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if let Some(r) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::Config(format!(
            "{what} must be square: row {r} has {} entries, expected {n}",
            rows[r].len()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn fill(f: &Fill, n: usize, what: &str) -> Result<DMatrix<f64>> {
    match f {
        Fill::Scalar(v) => Ok(DMatrix::from_element(n, n, *v)),
        Fill::Matrix(rows) => {
            let m = matrix(rows, what)?;
            if m.nrows() != n {
                return Err(Error::Config(format!(
                    "{what} is {0}x{0}, expected {n}x{n}",
                    m.nrows()
                )));
            }
            Ok(m)
        }
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn n_players(&self) -> usize {
        match &self.game {
            GameConfig::Ring { n } => *n,
            GameConfig::Explicit { offset, .. } => offset.len(),
        }
    }

    pub fn build_game(&self) -> Result<QuadraticGame<f64>> {
        match &self.game {
            GameConfig::Ring { n } => ring_game(*n),
            GameConfig::Explicit { jacobian, offset } => {
                let r = matrix(jacobian, "game.jacobian")?;
                QuadraticGame::new(r, DVector::from_column_slice(offset))
            }
        }
    }

    pub fn build_graph(&self) -> Result<Digraph<f64>> {
        match &self.graph {
            GraphConfig::Cycle { n, symmetric } => {
                let g = default_cycle(*n)?;
                Ok(if *symmetric { g.symmetrized() } else { g })
            }
            GraphConfig::Explicit { weights } => Digraph::new(matrix(weights, "graph.weights")?),
        }
    }

    fn player_configs(&self) -> Vec<PlayerConfig> {
        match &self.players {
            PlayersConfig::Each(v) => v.clone(),
            PlayersConfig::Uniform(p) => vec![p.clone(); self.n_players()],
        }
    }

    /// Player specs with `delta` resolved against the mode's certified bound.
    pub fn build_players(&self) -> Result<Vec<PlayerSpec<f64>>> {
        self.player_configs()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let spec = |delta: f64| {
                    PlayerSpec::new(
                        p.order,
                        p.theta,
                        delta,
                        p.u_limit,
                        p.form,
                        self.allow_large_theta,
                    )
                    .map_err(|e| Error::Config(format!("players[{i}]: {e}")))
                };
                match (p.delta, p.auto_delta_margin) {
                    (Some(d), None) => spec(d),
                    (None, Some(margin)) => {
                        if !(margin > 0.0 && margin <= 1.0) {
                            return Err(Error::Config(format!(
                                "players[{i}]: auto_delta_margin = {margin} must lie in (0, 1]"
                            )));
                        }
                        let unit = PlayerLaw::new(&spec(1.0)?, self.mode, i)?.certified_bound();
                        match unit {
                            Some(b) => spec(margin * p.u_limit / b),
                            None => spec(1.0),
                        }
                    }
                    _ => Err(Error::Config(format!(
                        "players[{i}]: set exactly one of delta and auto_delta_margin"
                    ))),
                }
            })
            .collect()
    }

    /// Validates sizes and preconditions and builds the scenario.
    pub fn resolve(&self) -> Result<Resolved> {
        self.sim.validate()?;
        let game = self.build_game()?;
        let graph = self.build_graph()?;
        let n = game.offset().len();
        if graph.n() != n {
            return Err(Error::Config(format!(
                "game has {n} players but graph has {} nodes",
                graph.n()
            )));
        }
        let players = self.build_players()?;
        if players.len() != n {
            return Err(Error::Config(format!(
                "{} player entries for {n} players",
                players.len()
            )));
        }
        let x0: Vec<DVector<f64>> = match &self.init.x0 {
            None => players.iter().map(|p| DVector::zeros(p.order)).collect(),
            Some(rows) => {
                if rows.len() != n {
                    return Err(Error::Config(format!(
                        "init.x0 has {} rows for {n} players",
                        rows.len()
                    )));
                }
                for (i, (r, p)) in rows.iter().zip(&players).enumerate() {
                    if r.len() != p.order {
                        return Err(Error::Config(format!(
                            "init.x0[{i}] has {} entries but player {i} has order {}",
                            r.len(),
                            p.order
                        )));
                    }
                }
                rows.iter().map(|r| DVector::from_column_slice(r)).collect()
            }
        };
        let z0 = fill(&self.init.z0, n, "init.z0")?;
        let c0 = fill(&self.init.c0, n, "init.c0")?;
        for i in 0..n {
            for j in 0..n {
                if !(c0[(i, j)] > 0.0) {
                    return Err(Error::NonPositiveGain {
                        i,
                        j,
                        value: c0[(i, j)],
                    });
                }
            }
        }
        if !graph.is_strongly_connected() {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::StrongConnectivity,
                detail: "some ordered pair of players has no directed path".into(),
            });
        }
        if self.mode == SeekerMode::UndirectedAdaptive && !graph.is_symmetric() {
            return Err(Error::Config(
                "mode undirected_adaptive needs a symmetric graph".into(),
            ));
        }
        for (i, p) in players.iter().enumerate() {
            PlayerLaw::new(p, self.mode, i)?;
        }
        let nash = game.solve_nash_closed_form().ok();

        let config = ScenarioConfig {
            players: PlayersConfig::Each(
                players
                    .iter()
                    .map(|p| PlayerConfig {
                        order: p.order,
                        theta: p.theta,
                        delta: Some(p.delta),
                        auto_delta_margin: None,
                        u_limit: p.u_limit,
                        form: p.form,
                    })
                    .collect(),
            ),
            init: InitConfig {
                x0: Some(x0.iter().map(|x| x.iter().copied().collect()).collect()),
                z0: Fill::Matrix(to_rows(&z0)),
                c0: Fill::Matrix(to_rows(&c0)),
            },
            ..self.clone()
        };
        Ok(Resolved {
            config,
            scenario: Scenario {
                game,
                graph,
                players,
                mode: self.mode,
                x0,
                z0,
                c0,
                nash,
                allow_disconnected: false,
            },
        })
    }

    /// Copy with initial plant states and estimates drawn from the
    /// replicate's own stream: `x_i1` in `[-5, 5]`, higher derivatives and
    /// `z0` in `[-1, 1]`.
    pub fn randomized(&self, replicate: u64) -> Result<Self> {
        let players = self.build_players()?;
        let n = players.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate);
        let x0 = players
            .iter()
            .map(|p| {
                (0..p.order)
                    .map(|k| {
                        if k == 0 {
                            rng.gen_range(-5.0..=5.0)
                        } else {
                            rng.gen_range(-1.0..=1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let z0 = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        let mut out = self.clone();
        out.init.x0 = Some(x0);
        out.init.z0 = Fill::Matrix(z0);
        Ok(out)
    }
}

/// The numerical example: ring game on six players over the directed
/// 6-cycle, third-order players with `theta = 1/3`, `delta = 1`,
/// `x_i1(0) = i` and every other initial value 1.
pub fn paper_example(mode: SeekerMode) -> ScenarioConfig {
    let n = 6;
    ScenarioConfig {
        game: GameConfig::Ring { n },
        graph: GraphConfig::Cycle {
            n,
            symmetric: false,
        },
        players: PlayersConfig::Uniform(PlayerConfig {
            order: 3,
            theta: 1.0 / 3.0,
            delta: Some(1.0),
            auto_delta_margin: None,
            u_limit: 13.0 / 27.0,
            form: CanonicalForm::Standard,
        }),
        mode,
        init: InitConfig {
            x0: Some((1..=n).map(|i| vec![i as f64, 1.0, 1.0]).collect()),
            z0: Fill::Scalar(1.0),
            c0: Fill::Scalar(1.0),
        },
        sim: SimConfig::default(),
        seed: 0,
        allow_large_theta: false,
    }
}
