//! Genetic-algorithm inverse design over the thickness grid.
//!
//! Each generation: evaluate, keep the best `selected_fraction` unchanged,
//! refill by uniform crossover of two distinct random survivors, then
//! resample each child gene from the grid with probability `mutation_rate`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ThicknessGrid;
use crate::error::{Error, Result};
use crate::neural::{Mode, Network, Tensor};
use crate::optics::{Simulator, Spectrum, GRID_LEN};
use crate::rng::{domain, CounterRng};

pub const OPERATORS: &str =
    "selection=truncation with elitism; crossover=uniform per gene from two distinct survivors; \
     mutation=per-gene uniform resample from the thickness grid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub selected_fraction: f64,
    pub seed: u64,
    pub layer_count: usize,
    /// Stop as soon as the best fitness is at or below this value.
    pub target_mse: Option<f64>,
    #[serde(default)]
    pub grid: ThicknessGrid,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 200,
            generations: 500,
            mutation_rate: 0.1,
            selected_fraction: 0.1,
            seed: 42,
            layer_count: 20,
            target_mse: None,
            grid: ThicknessGrid::default(),
        }
    }
}

impl GaConfig {
    pub fn survivors(&self) -> usize {
        (self.population_size as f64 * self.selected_fraction).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.selected_fraction > 0.0 && self.selected_fraction <= 1.0) {
            return Err(Error::Validation(format!("selected_fraction {} not in (0, 1]", self.selected_fraction)));
        }
        if self.survivors() < 2 {
            return Err(Error::Validation("population_size * selected_fraction must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Validation(format!("mutation_rate {} not in [0, 1]", self.mutation_rate)));
        }
        if self.layer_count == 0 {
            return Err(Error::Validation("layer_count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    /// Grid indices, one per film layer.
    pub genes: Vec<usize>,
    pub fitness: f64,
}

impl Individual {
    pub fn thicknesses_nm(&self, grid: &ThicknessGrid) -> Vec<f64> {
        self.genes.iter().map(|&g| grid.value(g)).collect()
    }
}

/// How a candidate stack's spectrum is obtained.
pub enum FitnessBackend<'a> {
    Tmm(&'a Simulator),
    Fnn(&'a mut Network),
}

impl FitnessBackend<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            FitnessBackend::Tmm(_) => "tmm",
            FitnessBackend::Fnn(_) => "fnn",
        }
    }

    /// MSE against `target` for each thickness vector (nm).
    pub fn evaluate(&mut self, stacks: &[Vec<f64>], target: &Spectrum, grid: &ThicknessGrid) -> Result<Vec<f64>> {
        match self {
            FitnessBackend::Tmm(sim) => stacks
                .par_iter()
                .map(|d| Ok(target.mse(&sim.alternating_spectrum(d)?)))
                .collect(),
            FitnessBackend::Fnn(net) => {
                if stacks.is_empty() {
                    return Ok(Vec::new());
                }
                let l = stacks[0].len();
                if net.input_width() != l || net.output_width() != GRID_LEN {
                    return Err(Error::Validation(format!(
                        "width mismatch: forward network maps {} -> {}, GA needs {l} -> {GRID_LEN}",
                        net.input_width(),
                        net.output_width()
                    )));
                }
                let mut x = Vec::with_capacity(stacks.len() * l);
                for d in stacks {
                    x.extend(grid.normalize(d)?);
                }
                let pred = net.forward(&Tensor::new(vec![stacks.len(), l], x)?, Mode::Eval)?;
                Ok(pred.data().chunks_exact(GRID_LEN).map(|row| crate::optics::mse_slices(row, target.values())).collect())
            }
        }
    }
}

/// Fitness of a single stack.
pub fn fitness(thicknesses_nm: &[f64], target: &Spectrum, backend: &mut FitnessBackend<'_>) -> Result<f64> {
    let grid = ThicknessGrid::default();
    Ok(backend.evaluate(&[thicknesses_nm.to_vec()], target, &grid)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_mse: f64,
    pub mean_mse: f64,
}

#[derive(Debug, Clone)]
pub struct GaResult {
    pub backend: String,
    pub best: Individual,
    /// Entry 0 is the initial population.
    pub history: Vec<GenerationStats>,
    pub generations_run: usize,
    pub seconds: f64,
}

impl GaResult {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("generation,best_mse,mean_mse\n");
        for h in &self.history {
            out.push_str(&format!("{},{:e},{:e}\n", h.generation, h.best_mse, h.mean_mse));
        }
        out
    }
}

/// The seeded initial population, shared by every backend.
pub fn initial_population(config: &GaConfig) -> Vec<Vec<usize>> {
    let rng = CounterRng::new(config.seed);
    let n = config.grid.len() as u64;
    (0..config.population_size as u64)
        .map(|i| (0..config.layer_count as u32).map(|j| rng.below_at(domain::GA_INIT, i, j, n) as usize).collect())
        .collect()
}

fn stats(generation: usize, population: &[Individual]) -> GenerationStats {
    let best_mse = population.iter().map(|p| p.fitness).fold(f64::INFINITY, f64::min);
    let mean_mse = population.iter().map(|p| p.fitness).sum::<f64>() / population.len() as f64;
    GenerationStats { generation, best_mse, mean_mse }
}

fn evaluate_genes(
    genes: Vec<Vec<usize>>,
    target: &Spectrum,
    backend: &mut FitnessBackend<'_>,
    grid: &ThicknessGrid,
) -> Result<Vec<Individual>> {
    let stacks: Vec<Vec<f64>> = genes.iter().map(|g| g.iter().map(|&i| grid.value(i)).collect()).collect();
    let fit = backend.evaluate(&stacks, target, grid)?;
    if let Some(bad) = fit.iter().find(|f| !f.is_finite()) {
        return Err(Error::Domain(format!("non-finite fitness {bad}")));
    }
    Ok(genes.into_iter().zip(fit).map(|(genes, fitness)| Individual { genes, fitness }).collect())
}

/// Sorts best-first; ties keep population order.
fn rank(population: &mut [Individual]) {
    population.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
}

pub fn run_ga(target: &Spectrum, backend: &mut FitnessBackend<'_>, config: &GaConfig) -> Result<GaResult> {
    config.validate()?;
    let start = Instant::now();
    let grid = config.grid;
    let n_grid = grid.len() as u64;
    let rng = CounterRng::new(config.seed);
    let keep = config.survivors();

    let mut population = evaluate_genes(initial_population(config), target, backend, &grid)?;
    rank(&mut population);
    let mut history = vec![stats(0, &population)];
    let mut generations_run = 0;

    for generation in 1..=config.generations {
        if config.target_mse.is_some_and(|t| population[0].fitness <= t) {
            break;
        }
        let mut stream = rng.stream(domain::GA_BREED, generation as u64);
        population.truncate(keep);
        let mut children = Vec::with_capacity(config.population_size - keep);
        while keep + children.len() < config.population_size {
            let a = stream.below(keep as u64) as usize;
            let mut b = stream.below(keep as u64 - 1) as usize;
            if b >= a {
                b += 1;
            }
            let child: Vec<usize> = (0..config.layer_count)
                .map(|j| {
                    let gene = if stream.next_f64() < 0.5 { population[a].genes[j] } else { population[b].genes[j] };
                    if stream.next_f64() < config.mutation_rate {
                        stream.below(n_grid) as usize
                    } else {
                        gene
                    }
                })
                .collect();
            children.push(child);
        }
        population.extend(evaluate_genes(children, target, backend, &grid)?);
        rank(&mut population);
        history.push(stats(generation, &population));
        generations_run = generation;
    }

    Ok(GaResult {
        backend: backend.name().to_string(),
        best: population.swap_remove(0),
        history,
        generations_run,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub backend: String,
    pub best_mse: f64,
    pub seconds: f64,
    pub generations_run: usize,
}

#[derive(Debug, Clone)]
pub struct GaComparison {
    pub tmm: GaResult,
    pub fnn: GaResult,
    /// TMM-simulated MSE of the FNN-guided optimum.
    pub fnn_best_tmm_mse: f64,
}

impl GaComparison {
    pub fn rows(&self) -> Vec<CompareRow> {
        [&self.tmm, &self.fnn]
            .into_iter()
            .map(|r| CompareRow {
                backend: r.backend.clone(),
                best_mse: r.best.fitness,
                seconds: r.seconds,
                generations_run: r.generations_run,
            })
            .collect()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("backend,best_mse,seconds,generations_run\n");
        for r in self.rows() {
            out.push_str(&format!("{},{:e},{:.3},{}\n", r.backend, r.best_mse, r.seconds, r.generations_run));
        }
        out
    }
}

/// Runs the GA twice from the same seed, once with TMM fitness and once
/// with a trained forward network as the fitness model.
pub fn ga_compare(
    target: &Spectrum,
    simulator: &Simulator,
    fnn: &mut Network,
    config: &GaConfig,
) -> Result<GaComparison> {
    let tmm = run_ga(target, &mut FitnessBackend::Tmm(simulator), config)?;
    let fnn_run = run_ga(target, &mut FitnessBackend::Fnn(fnn), config)?;
    let fnn_best_tmm_mse = target.mse(&simulator.alternating_spectrum(&fnn_run.best.thicknesses_nm(&config.grid))?);
    Ok(GaComparison { tmm, fnn: fnn_run, fnn_best_tmm_mse })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(layer_count: usize, seed: u64) -> GaConfig {
        GaConfig { population_size: 20, generations: 5, layer_count, seed, ..GaConfig::default() }
    }

    #[test]
    fn config_checks() {
        assert!(GaConfig::default().validate().is_ok());
        assert_eq!(GaConfig::default().survivors(), 20);
        assert!(GaConfig { population_size: 19, ..small(2, 0) }.validate().is_err());
        assert!(GaConfig { selected_fraction: 0.0, ..small(2, 0) }.validate().is_err());
        assert!(GaConfig { mutation_rate: 1.5, ..small(2, 0) }.validate().is_err());
    }

    #[test]
    fn initial_population_is_seeded_and_on_grid() {
        let a = initial_population(&small(4, 3));
        assert_eq!(a, initial_population(&small(4, 3)));
        assert_ne!(a, initial_population(&small(4, 4)));
        assert!(a.iter().flatten().all(|&g| g < 41));
    }

    #[test]
    fn zero_generations_returns_best_initial() {
        let sim = Simulator::shipped().unwrap();
        let target = sim.alternating_spectrum(&[50.0, 60.0]).unwrap();
        let cfg = GaConfig { generations: 0, ..small(2, 1) };
        let r = run_ga(&target, &mut FitnessBackend::Tmm(&sim), &cfg).unwrap();
        let mut backend = FitnessBackend::Tmm(&sim);
        let grid = ThicknessGrid::default();
        let best = initial_population(&cfg)
            .iter()
            .map(|g| fitness(&g.iter().map(|&i| grid.value(i)).collect::<Vec<_>>(), &target, &mut backend).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.best.fitness, best);
        assert_eq!(r.generations_run, 0);
        assert_eq!(r.history.len(), 1);
    }

    #[test]
    fn target_mse_stops_early() {
        let sim = Simulator::shipped().unwrap();
        let target = sim.alternating_spectrum(&[50.0, 60.0]).unwrap();
        let cfg = GaConfig { generations: 50, target_mse: Some(1.0), ..small(2, 1) };
        let r = run_ga(&target, &mut FitnessBackend::Tmm(&sim), &cfg).unwrap();
        assert_eq!(r.generations_run, 0);
    }
}
