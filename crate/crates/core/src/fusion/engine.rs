//! Event-driven scheduling of a linear pipeline of stages exchanging chunks
//! through bounded buffers.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{TraceEvent, TraceKind};
use crate::error::{Error, Result};

/// When a producing stage makes its output chunks visible downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProduceMode {
    /// Each unit writes and finalizes one chunk (filter-major, depthwise).
    PerUnit,
    /// Every chunk is partial until the tile's last unit (channel-major).
    AtTileEnd,
}

/// What a consuming stage needs before running a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumeMode {
    /// Unit `j` reads chunk `j` and frees it afterwards (channel-major,
    /// depthwise).
    PerUnit,
    /// The first unit waits for the whole tile; it is freed after the last
    /// unit (filter-major).
    WholeTile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTiming {
    pub units_per_tile: u64,
    pub cycles_per_unit: u64,
    pub produce: ProduceMode,
    pub consume: ConsumeMode,
}

/// Buffer between stage `i` and `i + 1`, counted in chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub chunks_per_tile: u64,
    pub capacity_chunks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageStats {
    pub busy_cycles: u64,
    pub first_start: Option<u64>,
    pub last_finish: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub makespan: u64,
    pub stages: Vec<StageStats>,
    pub peak_chunks: Vec<u64>,
    pub trace: Option<Vec<TraceEvent>>,
}

const DEADLOCK_CONTEXT: usize = 64;

struct Link {
    spec: LinkSpec,
    occupied: u64,
    finalized: u64,
    peak: u64,
}

struct Stage {
    timing: StageTiming,
    tile: u64,
    unit: u64,
    busy_until: Option<u64>,
    stats: StageStats,
}

struct Trace {
    full: Option<Vec<TraceEvent>>,
    recent: VecDeque<TraceEvent>,
}

impl Trace {
    fn push(&mut self, ev: TraceEvent) {
        if let Some(full) = &mut self.full {
            full.push(ev);
        }
        if self.recent.len() == DEADLOCK_CONTEXT {
            self.recent.pop_front();
        }
        self.recent.push_back(ev);
    }
}

fn producer_need(t: &StageTiming, link: &LinkSpec) -> u64 {
    match t.produce {
        ProduceMode::PerUnit => 1,
        ProduceMode::AtTileEnd => link.chunks_per_tile,
    }
}

fn consumer_need(t: &StageTiming, link: &LinkSpec) -> u64 {
    match t.consume {
        ConsumeMode::PerUnit => 1,
        ConsumeMode::WholeTile => link.chunks_per_tile,
    }
}

fn check(stages: &[StageTiming], links: &[LinkSpec]) -> Result<()> {
    if stages.is_empty() || links.len() + 1 != stages.len() {
        return Err(Error::InvalidConfig(format!("{} stages need {} links, got {}", stages.len(), stages.len().saturating_sub(1), links.len())));
    }
    for (i, s) in stages.iter().enumerate() {
        if s.units_per_tile == 0 || s.cycles_per_unit == 0 {
            return Err(Error::InvalidConfig(format!("stage {i} has no work")));
        }
    }
    for (i, link) in links.iter().enumerate() {
        let (prod, cons) = (&stages[i], &stages[i + 1]);
        if prod.produce == ProduceMode::PerUnit && prod.units_per_tile != link.chunks_per_tile {
            return Err(Error::InvalidConfig(format!(
                "stage {i} runs {} units but buffer {} holds {} chunks per tile",
                prod.units_per_tile,
                i + 1,
                link.chunks_per_tile
            )));
        }
        if cons.consume == ConsumeMode::PerUnit && cons.units_per_tile != link.chunks_per_tile {
            return Err(Error::InvalidConfig(format!(
                "stage {} runs {} units but buffer {} holds {} chunks per tile",
                i + 1,
                cons.units_per_tile,
                i + 1,
                link.chunks_per_tile
            )));
        }
        let need = producer_need(prod, link).max(consumer_need(cons, link));
        if link.capacity_chunks < need {
            return Err(Error::InefficientConfig(format!(
                "buffer {} holds {} chunks but its producer and consumer need {need} at once",
                i + 1,
                link.capacity_chunks
            )));
        }
    }
    Ok(())
}

/// Runs every stage over `tiles` tiles. Off-chip input of the first stage
/// and output of the last are always available.
pub fn simulate_pipeline(stages: &[StageTiming], links: &[LinkSpec], tiles: u64, record_trace: bool) -> Result<Schedule> {
    check(stages, links)?;
    let mut st: Vec<Stage> =
        stages.iter().map(|&timing| Stage { timing, tile: 0, unit: 0, busy_until: None, stats: StageStats::default() }).collect();
    let mut ln: Vec<Link> = links.iter().map(|&spec| Link { spec, occupied: 0, finalized: 0, peak: 0 }).collect();
    let mut trace = Trace { full: record_trace.then(Vec::new), recent: VecDeque::new() };
    let n = st.len();
    let mut now = 0u64;

    loop {
        // starts, in layer order
        for i in 0..n {
            let s = &st[i];
            if s.busy_until.is_some() || s.tile >= tiles {
                continue;
            }
            let (tile, unit, timing) = (s.tile, s.unit, s.timing);
            let input_ready = i == 0 || {
                let link = &ln[i - 1];
                let k = link.spec.chunks_per_tile;
                match timing.consume {
                    ConsumeMode::PerUnit => link.finalized > tile * k + unit,
                    ConsumeMode::WholeTile => unit > 0 || link.finalized >= (tile + 1) * k,
                }
            };
            let reserve = if i + 1 < n {
                let link = &ln[i];
                match timing.produce {
                    ProduceMode::PerUnit => 1,
                    ProduceMode::AtTileEnd if unit == 0 => link.spec.chunks_per_tile,
                    ProduceMode::AtTileEnd => 0,
                }
            } else {
                0
            };
            let space_ready = i + 1 == n || ln[i].occupied + reserve <= ln[i].spec.capacity_chunks;
            if !(input_ready && space_ready) {
                continue;
            }
            if i + 1 < n {
                let link = &mut ln[i];
                link.occupied += reserve;
                link.peak = link.peak.max(link.occupied);
            }
            let s = &mut st[i];
            s.busy_until = Some(now + timing.cycles_per_unit);
            s.stats.first_start.get_or_insert(now);
            trace.push(TraceEvent { time: now, layer: i, tile, unit, event: TraceKind::Start });
        }

        let Some(next) = st.iter().filter_map(|s| s.busy_until).min() else {
            if st.iter().all(|s| s.tile >= tiles) {
                break;
            }
            return Err(Error::SimDeadlock { time: now, trace: trace.recent.into_iter().collect() });
        };
        now = next;

        // finishes, in layer order
        for i in 0..n {
            if st[i].busy_until != Some(now) {
                continue;
            }
            let (tile, unit, timing) = (st[i].tile, st[i].unit, st[i].timing);
            let last_unit = unit + 1 == timing.units_per_tile;
            if i > 0 {
                let link = &mut ln[i - 1];
                match timing.consume {
                    ConsumeMode::PerUnit => link.occupied -= 1,
                    ConsumeMode::WholeTile if last_unit => link.occupied -= link.spec.chunks_per_tile,
                    ConsumeMode::WholeTile => {}
                }
            }
            if i + 1 < n {
                let link = &mut ln[i];
                match timing.produce {
                    ProduceMode::PerUnit => link.finalized += 1,
                    ProduceMode::AtTileEnd if last_unit => link.finalized += link.spec.chunks_per_tile,
                    ProduceMode::AtTileEnd => {}
                }
            }
            let s = &mut st[i];
            s.busy_until = None;
            s.stats.busy_cycles += timing.cycles_per_unit;
            s.stats.last_finish = Some(now);
            if last_unit {
                s.tile += 1;
                s.unit = 0;
            } else {
                s.unit += 1;
            }
            trace.push(TraceEvent { time: now, layer: i, tile, unit, event: TraceKind::Finish });
        }
    }

    Ok(Schedule {
        makespan: now,
        stages: st.into_iter().map(|s| s.stats).collect(),
        peak_chunks: ln.into_iter().map(|l| l.peak).collect(),
        trace: trace.full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FM: StageTiming = StageTiming { units_per_tile: 2, cycles_per_unit: 10, produce: ProduceMode::PerUnit, consume: ConsumeMode::WholeTile };
    const CM: StageTiming = StageTiming { units_per_tile: 2, cycles_per_unit: 10, produce: ProduceMode::AtTileEnd, consume: ConsumeMode::PerUnit };

    #[test]
    fn toy_double_buffered() {
        // L0 u0 [0,10) -> chunk 0; L1 u0 [10,20) and L0 u1 [10,20); L1 u1 [20,30)
        let s = simulate_pipeline(&[FM, CM], &[LinkSpec { chunks_per_tile: 2, capacity_chunks: 2 }], 1, true).unwrap();
        assert_eq!(s.makespan, 30);
        let starts: Vec<(u64, usize)> =
            s.trace.unwrap().iter().filter(|e| e.event == TraceKind::Start).map(|e| (e.time, e.layer)).collect();
        assert_eq!(starts, [(0, 0), (10, 0), (10, 1), (20, 1)]);
    }

    #[test]
    fn toy_single_buffered() {
        let s = simulate_pipeline(&[FM, CM], &[LinkSpec { chunks_per_tile: 2, capacity_chunks: 1 }], 1, false).unwrap();
        assert_eq!(s.makespan, 40);
    }

    #[test]
    fn single_stage() {
        let s = simulate_pipeline(&[FM], &[], 3, false).unwrap();
        assert_eq!(s.makespan, 60);
        assert_eq!(s.stages[0].busy_cycles, 60);
    }

    #[test]
    fn undersized_buffer_is_inefficient() {
        let r = simulate_pipeline(&[CM, CM], &[LinkSpec { chunks_per_tile: 2, capacity_chunks: 1 }], 1, false);
        assert!(matches!(r, Err(Error::InefficientConfig(_))));
    }

    #[test]
    fn unit_chunk_mismatch() {
        let r = simulate_pipeline(&[FM, CM], &[LinkSpec { chunks_per_tile: 3, capacity_chunks: 6 }], 1, false);
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }
}
