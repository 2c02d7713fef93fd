//! Identity, packet and event vocabulary shared by every cache and the engine.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Value of the nomination field on a request or data packet nobody nominated.
pub const NOT_NOMINATED: i32 = -1;

/// Index of a content in the catalog, starting at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContentId(pub u32);

impl ContentId {
    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One cacheable data unit: a packet position inside a content.
///
/// Ordering is content-major, index-minor, which the derive gives us from the
/// field order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PacketId {
    pub content: ContentId,
    pub index: u32,
}

impl PacketId {
    pub fn new(content: u32, index: u32) -> Self {
        debug_assert!(content >= 1 && index >= 1);
        PacketId { content: ContentId(content), index }
    }

    /// The single packet of a one-packet content, used by content-level experiments.
    pub fn whole(content: ContentId) -> Self {
        PacketId { content, index: 1 }
    }
}

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.content.0, self.index)
    }
}

/// Total order used for deterministic tie-breaking between packets.
pub fn packet_order(a: &PacketId, b: &PacketId) -> std::cmp::Ordering {
    a.cmp(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestPacket {
    pub packet: PacketId,
    /// Nomination field; [`NOT_NOMINATED`] or the number of routers passed
    /// since the nominating one.
    pub nf: i32,
    pub origin: u32,
    pub issue_time: f64,
}

impl RequestPacket {
    pub fn new(packet: PacketId, origin: u32, issue_time: f64) -> Self {
        RequestPacket { packet, nf: NOT_NOMINATED, origin, issue_time }
    }

    pub fn is_nominated(&self) -> bool {
        self.nf > NOT_NOMINATED
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPacket {
    pub packet: PacketId,
    pub nf: i32,
    pub size_units: u32,
}

impl DataPacket {
    /// Data answering `req`; the nomination field is copied from the request.
    pub fn answering(req: &RequestPacket) -> Self {
        DataPacket { packet: req.packet, nf: req.nf, size_units: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CacheEventKind {
    Hit,
    Miss,
    Write,
    Eviction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEvent {
    pub kind: CacheEventKind,
    pub packet: PacketId,
    pub cache: u32,
    pub time: f64,
}

/// Result of presenting a request to a cache that does not take part in
/// coordination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
}

/// Derives an independent stream seed from a run seed and a component id
/// (router, group, catalog). SplitMix64 finalizer over the combined words.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cmp::Ordering;

    #[test]
    fn packet_order_is_content_major() {
        assert_eq!(packet_order(&PacketId::new(1, 2), &PacketId::new(1, 3)), Ordering::Less);
        assert_eq!(packet_order(&PacketId::new(2, 1), &PacketId::new(1, 9)), Ordering::Greater);
        assert_eq!(packet_order(&PacketId::new(5, 5), &PacketId::new(5, 5)), Ordering::Equal);
    }

    #[test]
    fn data_copies_request_nf() {
        let mut req = RequestPacket::new(PacketId::new(3, 1), 0, 0.0);
        assert!(!req.is_nominated());
        req.nf = 2;
        let data = DataPacket::answering(&req);
        assert_eq!(data.nf, 2);
        assert_eq!(data.packet, req.packet);
        assert_eq!(data.size_units, 1);
    }
}
