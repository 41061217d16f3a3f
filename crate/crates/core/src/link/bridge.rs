use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::manifest::{ChannelDirection, ChannelEntry, ChannelSubject, RoutingTable};

use super::frame::{decode_stream, encode_frame, Frame, FrameError, FrameKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Host,
    Fabric,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Host => Side::Fabric,
            Side::Fabric => Side::Host,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Host => "host",
            Side::Fabric => "fabric",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinkError {
    #[error("channel {0} is not registered")]
    UnregisteredChannel(u16),
    #[error("no channel for {0:?}")]
    UnregisteredSubject(ChannelSubject),
    #[error("channel {channel} does not carry topic data from the {from} side")]
    WrongDirection { channel: u16, from: Side },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// One frame on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub from: Side,
    pub frame: Frame,
    pub bytes: Vec<u8>,
    /// Virtual time from send to arrival.
    pub delay_us: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Received {
    pub frames: Vec<(Frame, ChannelSubject)>,
    /// Human-readable decode and routing problems.
    pub errors: Vec<String>,
}

/// Host/fabric bridge state: channel table, sequence counters, byte rate.
#[derive(Debug, Clone)]
pub struct Bridge {
    channels: BTreeMap<u16, ChannelEntry>,
    by_subject: BTreeMap<ChannelSubject, u16>,
    seq: BTreeMap<(u16, Side), u8>,
    bytes_per_ms: Option<u64>,
    sent_frames: u64,
    sent_bytes: u64,
}

impl Bridge {
    /// Registers exactly the channels allocated in the plan.
    pub fn new(routing: &RoutingTable, bytes_per_ms: Option<u64>) -> Bridge {
        Bridge::from_channels(routing.channels.iter().cloned(), bytes_per_ms)
    }

    pub fn from_channels(
        channels: impl IntoIterator<Item = ChannelEntry>,
        bytes_per_ms: Option<u64>,
    ) -> Bridge {
        let channels: BTreeMap<u16, ChannelEntry> =
            channels.into_iter().map(|c| (c.id, c)).collect();
        let by_subject = channels
            .values()
            .map(|c| (c.subject.clone(), c.id))
            .collect();
        Bridge {
            channels,
            by_subject,
            seq: BTreeMap::new(),
            bytes_per_ms: bytes_per_ms.filter(|&b| b > 0),
            sent_frames: 0,
            sent_bytes: 0,
        }
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelEntry> {
        self.channels.values()
    }

    pub fn channel_of(&self, subject: &ChannelSubject) -> Option<u16> {
        self.by_subject.get(subject).copied()
    }

    pub fn sent_frames(&self) -> u64 {
        self.sent_frames
    }

    pub fn sent_bytes(&self) -> u64 {
        self.sent_bytes
    }

    /// `ceil(frame_bytes / rate)` whole milliseconds; zero without a rate limit.
    pub fn transmit_delay_us(&self, frame_bytes: usize) -> u64 {
        match self.bytes_per_ms {
            None => 0,
            Some(rate) => (frame_bytes as u64).div_ceil(rate) * 1000,
        }
    }

    pub fn send(
        &mut self,
        from: Side,
        channel: u16,
        kind: FrameKind,
        payload: Vec<u8>,
    ) -> Result<Transmission, LinkError> {
        let entry = self
            .channels
            .get(&channel)
            .ok_or(LinkError::UnregisteredChannel(channel))?;
        if kind == FrameKind::TopicData {
            let allowed = matches!(
                (entry.direction, from),
                (ChannelDirection::Both, _)
                    | (ChannelDirection::HostToFabric, Side::Host)
                    | (ChannelDirection::FabricToHost, Side::Fabric)
            );
            if !allowed {
                return Err(LinkError::WrongDirection { channel, from });
            }
        }
        let seq = self.seq.entry((channel, from)).or_insert(0);
        let frame = Frame::new(channel, kind, *seq, payload);
        let bytes = encode_frame(&frame)?;
        *seq = seq.wrapping_add(1);
        self.sent_frames += 1;
        self.sent_bytes += bytes.len() as u64;
        let delay_us = self.transmit_delay_us(bytes.len());
        Ok(Transmission {
            from,
            frame,
            bytes,
            delay_us,
        })
    }

    pub fn send_on(
        &mut self,
        from: Side,
        subject: &ChannelSubject,
        kind: FrameKind,
        payload: Vec<u8>,
    ) -> Result<Transmission, LinkError> {
        let channel = self
            .channel_of(subject)
            .ok_or_else(|| LinkError::UnregisteredSubject(subject.clone()))?;
        self.send(from, channel, kind, payload)
    }

    /// Decodes bytes arriving on one side and resolves each frame's channel.
    pub fn receive(&self, bytes: &[u8]) -> Received {
        let d = decode_stream(bytes);
        let mut out = Received {
            frames: Vec::new(),
            errors: d.errors.iter().map(|e| e.to_string()).collect(),
        };
        if !d.remainder.is_empty() {
            out.errors
                .push(format!("incomplete frame of {} bytes", d.remainder.len()));
        }
        for f in d.frames {
            match self.channels.get(&f.channel) {
                Some(c) => out.frames.push((f, c.subject.clone())),
                None => out
                    .errors
                    .push(LinkError::UnregisteredChannel(f.channel).to_string()),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bridge(rate: Option<u64>) -> Bridge {
        Bridge::from_channels(
            [
                ChannelEntry {
                    id: 1,
                    subject: ChannelSubject::Topic("cmd".into()),
                    direction: ChannelDirection::HostToFabric,
                },
                ChannelEntry {
                    id: 2,
                    subject: ChannelSubject::Service("reset".into()),
                    direction: ChannelDirection::FabricToHost,
                },
            ],
            rate,
        )
    }

    #[test]
    fn unlimited_rate_is_instant() {
        let mut b = bridge(None);
        let t = b.send(Side::Host, 1, FrameKind::TopicData, vec![1, 2]).unwrap();
        assert_eq!(t.delay_us, 0);
    }

    #[test]
    fn sixteen_bytes_at_ten_per_ms() {
        let b = bridge(Some(10));
        assert_eq!(b.transmit_delay_us(16), 2000);
        assert_eq!(b.transmit_delay_us(10), 1000);
    }

    #[test]
    fn unknown_channel_and_direction() {
        let mut b = bridge(None);
        assert_eq!(
            b.send(Side::Host, 9, FrameKind::TopicData, vec![]),
            Err(LinkError::UnregisteredChannel(9))
        );
        assert!(matches!(
            b.send(Side::Fabric, 1, FrameKind::TopicData, vec![]),
            Err(LinkError::WrongDirection { .. })
        ));
        // Services carry requests and responses both ways.
        assert!(b.send(Side::Host, 2, FrameKind::ServiceResponse, vec![]).is_ok());
    }

    #[test]
    fn sequence_numbers_per_channel_and_side() {
        let mut b = bridge(None);
        let a = b.send(Side::Host, 1, FrameKind::TopicData, vec![]).unwrap();
        let c = b.send(Side::Host, 1, FrameKind::TopicData, vec![]).unwrap();
        let d = b.send(Side::Fabric, 2, FrameKind::ServiceRequest, vec![]).unwrap();
        assert_eq!((a.frame.seq, c.frame.seq, d.frame.seq), (0, 1, 0));
        let r = b.receive(&[a.bytes, c.bytes].concat());
        assert_eq!(r.frames.len(), 2);
        assert_eq!(r.frames[0].1, ChannelSubject::Topic("cmd".into()));
    }
}
