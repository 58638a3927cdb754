//! Two-endpoint session over a TCP loopback connection.
//!
//! The block is simulated once and its records are split: Alice keeps the
//! prepared states, Bob keeps his measurement results. Everything else
//! travels as [`ReconciliationMessage`](super::ReconciliationMessage) frames.

use super::wire::{FrameReader, FrameWriter, MessageType, Payload, WireError};
use super::{
    evaluate_block, sift, simulate_session_block, KeyRateReport, SessionConfig, SessionError,
};
use crate::channel::{AliceRecord, BobRecord};
use crate::finite_key::{BasisTally, Intensity, TallyCounts};
use crate::qudit::BasisName;
use serde::{Deserialize, Serialize};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;
use thiserror::Error;

const IO_TIMEOUT: Duration = Duration::from_secs(60);

/// Point of the exchange reached when a block was aborted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    BasisExchange,
    Disclosure,
    ErrorEstimation,
    Commit,
}

/// Enough state to rerun an aborted block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub block_id: u32,
    pub seed: u64,
    pub stage: Stage,
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("connection lost during {:?} of block {}", checkpoint.stage, checkpoint.block_id)]
    ConnectionLost {
        checkpoint: Checkpoint,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Wire(WireError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("peer committed key length {committed}, computed {computed}")]
    CommitMismatch { committed: f64, computed: f64 },
    #[error("peer announced {got} entries, expected {expected}")]
    CountMismatch { expected: usize, got: usize },
    #[error("socket setup failed: {0}")]
    Setup(io::Error),
    #[error("endpoint thread panicked")]
    Panicked,
}

/// Test hooks for the transmitter endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetOptions {
    pub block_id: u32,
    /// Alice closes the connection after sending this many frames.
    pub alice_drops_after: Option<u32>,
    /// Alice writes her second and third frames in swapped order.
    pub alice_reorders: bool,
}

pub fn run_networked_session(config: &SessionConfig, seed: u64) -> Result<KeyRateReport, NetError> {
    run_networked_session_with(config, seed, NetOptions::default())
}

/// Reruns an aborted block from its checkpoint.
pub fn resume_networked_session(
    config: &SessionConfig,
    checkpoint: &Checkpoint,
) -> Result<KeyRateReport, NetError> {
    run_networked_session_with(
        config,
        checkpoint.seed,
        NetOptions {
            block_id: checkpoint.block_id,
            ..NetOptions::default()
        },
    )
}

pub fn run_networked_session_with(
    config: &SessionConfig,
    seed: u64,
    options: NetOptions,
) -> Result<KeyRateReport, NetError> {
    let block = simulate_session_block(config, seed)?;
    let listener = TcpListener::bind(("127.0.0.1", 0)).map_err(NetError::Setup)?;
    let addr = listener.local_addr().map_err(NetError::Setup)?;
    let (alice_records, bob_records) = match &block.records {
        Some(r) => (Some(&r.alice[..]), Some(&r.bob[..])),
        None => (None, None),
    };
    let duration = block.wall_time_equivalent;
    let analytic_tallies = block.tallies;

    std::thread::scope(|scope| {
        let alice = scope.spawn(move || -> Result<(), NetError> {
            let stream = TcpStream::connect(addr).map_err(NetError::Setup)?;
            let mut alice = Alice::new(stream, options)?;
            match alice.run(config, alice_records, duration) {
                Err(NetError::ConnectionLost { .. }) | Ok(()) => Ok(()),
                Err(e) => Err(e),
            }
        });
        let (stream, _) = listener.accept().map_err(NetError::Setup)?;
        let bob = Bob::new(stream, options.block_id, seed)?.run(
            config,
            bob_records,
            analytic_tallies,
            duration,
        );
        let alice = alice.join().map_err(|_| NetError::Panicked)?;
        let report = bob?;
        alice?;
        Ok(report)
    })
}

fn lost(block_id: u32, seed: u64, stage: Stage) -> impl Fn(WireError) -> NetError {
    move |e| match e {
        WireError::Io(source) => NetError::ConnectionLost {
            checkpoint: Checkpoint {
                block_id,
                seed,
                stage,
            },
            source,
        },
        other => NetError::Wire(other),
    }
}

fn estimate_order() -> [(BasisName, Intensity); 4] {
    [
        (BasisName::Z, Intensity::Mu1),
        (BasisName::Z, Intensity::Mu2),
        (BasisName::X, Intensity::Mu1),
        (BasisName::X, Intensity::Mu2),
    ]
}

struct Alice {
    reader: FrameReader<BufReader<TcpStream>>,
    writer: BufWriter<TcpStream>,
    options: NetOptions,
    sent: u32,
    held: Option<Payload>,
}

impl Alice {
    fn new(stream: TcpStream, options: NetOptions) -> Result<Self, NetError> {
        stream
            .set_read_timeout(Some(IO_TIMEOUT))
            .map_err(NetError::Setup)?;
        let read = stream.try_clone().map_err(NetError::Setup)?;
        Ok(Self {
            reader: FrameReader::new(BufReader::new(read), options.block_id),
            writer: BufWriter::new(stream),
            options,
            sent: 0,
            held: None,
        })
    }

    fn lost(&self, stage: Stage) -> impl Fn(WireError) -> NetError {
        lost(self.options.block_id, 0, stage)
    }

    fn send(&mut self, payload: Payload, stage: Stage) -> Result<(), NetError> {
        if self.options.alice_drops_after == Some(self.sent) {
            let _ = self.writer.get_ref().shutdown(std::net::Shutdown::Both);
            return Err(NetError::ConnectionLost {
                checkpoint: Checkpoint {
                    block_id: self.options.block_id,
                    seed: 0,
                    stage,
                },
                source: io::ErrorKind::ConnectionAborted.into(),
            });
        }
        let seq = self.sent;
        self.sent += 1;
        if self.options.alice_reorders && seq == 1 {
            self.held = Some(payload);
            return Ok(());
        }
        let mut w = FrameWriter::with_seq(&mut self.writer, self.options.block_id, seq);
        w.send(payload)
            .map_err(lost(self.options.block_id, 0, stage))?;
        if let Some(held) = self.held.take() {
            let mut w = FrameWriter::with_seq(&mut self.writer, self.options.block_id, 1);
            w.send(held)
                .map_err(lost(self.options.block_id, 0, stage))?;
        }
        Ok(())
    }

    fn run(
        &mut self,
        config: &SessionConfig,
        records: Option<&[AliceRecord]>,
        duration: f64,
    ) -> Result<(), NetError> {
        if let Some(records) = records {
            let stage = Stage::BasisExchange;
            let Payload::Bases(bob_bases) = self
                .reader
                .expect(MessageType::BasisAnnouncement)
                .map_err(self.lost(stage))?
            else {
                unreachable!("expect checks the type")
            };
            if bob_bases.len() != records.len() {
                return Err(NetError::CountMismatch {
                    expected: records.len(),
                    got: bob_bases.len(),
                });
            }
            self.send(
                Payload::Bases(records.iter().map(|r| r.basis).collect()),
                stage,
            )?;
            let matched: Vec<&AliceRecord> = records
                .iter()
                .zip(&bob_bases)
                .filter(|(a, &b)| a.basis == b)
                .map(|(a, _)| a)
                .collect();
            let stage = Stage::Disclosure;
            self.send(
                Payload::Intensities(matched.iter().map(|r| r.intensity).collect()),
                stage,
            )?;
            self.send(
                Payload::Symbols(matched.iter().map(|r| r.symbol).collect()),
                stage,
            )?;
        }

        let stage = Stage::ErrorEstimation;
        let mut tallies = TallyCounts::default();
        for (basis, k) in estimate_order() {
            let Payload::ErrorEstimate { rate, size } = self
                .reader
                .expect(MessageType::ErrorEstimate)
                .map_err(self.lost(stage))?
            else {
                unreachable!("expect checks the type")
            };
            let t: &mut BasisTally = tallies.basis_mut(basis);
            t.n[k.index()] = size as u64;
            t.m[k.index()] = (rate * size).round() as u64;
        }
        let report = evaluate_block(config, &tallies, duration)?;
        self.send(
            Payload::BlockCommit {
                key_length: report.key_length_bits,
                duration,
            },
            Stage::Commit,
        )?;
        self.writer
            .flush()
            .map_err(|e| lost(self.options.block_id, 0, Stage::Commit)(WireError::Io(e)))
    }
}

struct Bob {
    reader: FrameReader<BufReader<TcpStream>>,
    writer: FrameWriter<BufWriter<TcpStream>>,
    block_id: u32,
    seed: u64,
}

impl Bob {
    fn new(stream: TcpStream, block_id: u32, seed: u64) -> Result<Self, NetError> {
        stream
            .set_read_timeout(Some(IO_TIMEOUT))
            .map_err(NetError::Setup)?;
        let read = stream.try_clone().map_err(NetError::Setup)?;
        Ok(Self {
            reader: FrameReader::new(BufReader::new(read), block_id),
            writer: FrameWriter::new(BufWriter::new(stream), block_id),
            block_id,
            seed,
        })
    }

    fn lost(&self, stage: Stage) -> impl Fn(WireError) -> NetError {
        lost(self.block_id, self.seed, stage)
    }

    fn run(
        mut self,
        config: &SessionConfig,
        records: Option<&[BobRecord]>,
        analytic: TallyCounts,
        duration: f64,
    ) -> Result<KeyRateReport, NetError> {
        let tallies = match records {
            Some(records) => self.sift_remote(records)?,
            None => analytic,
        };

        let stage = Stage::ErrorEstimation;
        for (basis, k) in estimate_order() {
            let t = tallies.basis(basis);
            let n = t.detections(k);
            let rate = if n > 0 {
                t.errors(k) as f64 / n as f64
            } else {
                0.0
            };
            self.writer
                .send(Payload::ErrorEstimate {
                    rate,
                    size: n as f64,
                })
                .map_err(self.lost(stage))?;
        }
        let report = evaluate_block(config, &tallies, duration)?;
        let Payload::BlockCommit { key_length, .. } = self
            .reader
            .expect(MessageType::BlockCommit)
            .map_err(self.lost(Stage::Commit))?
        else {
            unreachable!("expect checks the type")
        };
        if key_length.to_bits() != report.key_length_bits.to_bits() {
            return Err(NetError::CommitMismatch {
                committed: key_length,
                computed: report.key_length_bits,
            });
        }
        Ok(report)
    }

    fn sift_remote(&mut self, records: &[BobRecord]) -> Result<TallyCounts, NetError> {
        let stage = Stage::BasisExchange;
        self.writer
            .send(Payload::Bases(records.iter().map(|r| r.basis).collect()))
            .map_err(self.lost(stage))?;
        let Payload::Bases(alice_bases) = self
            .reader
            .expect(MessageType::BasisAnnouncement)
            .map_err(self.lost(stage))?
        else {
            unreachable!("expect checks the type")
        };
        if alice_bases.len() != records.len() {
            return Err(NetError::CountMismatch {
                expected: records.len(),
                got: alice_bases.len(),
            });
        }
        let matched: Vec<&BobRecord> = records
            .iter()
            .zip(&alice_bases)
            .filter(|(b, &a)| b.basis == a)
            .map(|(b, _)| b)
            .collect();

        let stage = Stage::Disclosure;
        let Payload::Intensities(intensities) = self
            .reader
            .expect(MessageType::IntensityAnnouncement)
            .map_err(self.lost(stage))?
        else {
            unreachable!("expect checks the type")
        };
        let Payload::Symbols(symbols) = self
            .reader
            .expect(MessageType::SymbolDisclosure)
            .map_err(self.lost(stage))?
        else {
            unreachable!("expect checks the type")
        };
        for got in [intensities.len(), symbols.len()] {
            if got != matched.len() {
                return Err(NetError::CountMismatch {
                    expected: matched.len(),
                    got,
                });
            }
        }
        let alice: Vec<AliceRecord> = matched
            .iter()
            .zip(intensities.iter().zip(&symbols))
            .map(|(b, (&intensity, &symbol))| AliceRecord {
                basis: b.basis,
                symbol,
                intensity,
                photons: 0,
            })
            .collect();
        let bob: Vec<BobRecord> = matched.into_iter().copied().collect();
        Ok(sift(&alice, &bob)?.tallies())
    }
}
