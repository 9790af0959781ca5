//! Canonical record types shared by every stage.

use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exact USD amount.
pub type Usd = Decimal;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {kind}: {reason}")]
pub struct ParseIdError {
    pub kind: &'static str,
    pub reason: String,
}

macro_rules! hex_id {
    ($(#[$meta:meta])* $name:ident, $len:expr, $kind:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn from_bytes(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl FromStr for $name {
            type Err = ParseIdError;

            /// Accepts either case, with or without a `0x` prefix.
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let trimmed = s.trim();
                let digits = trimmed
                    .strip_prefix("0x")
                    .or_else(|| trimmed.strip_prefix("0X"))
                    .unwrap_or(trimmed);
                if digits.len() != $len * 2 {
                    return Err(ParseIdError {
                        kind: $kind,
                        reason: alloc::format!(
                            "expected {} hex digits, got {}",
                            $len * 2,
                            digits.len()
                        ),
                    });
                }
                let mut out = [0u8; $len];
                hex::decode_to_slice(digits, &mut out).map_err(|e| ParseIdError {
                    kind: $kind,
                    reason: e.to_string(),
                })?;
                Ok(Self(out))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("0x")?;
                for b in self.0.iter() {
                    write!(f, "{:02x}", b)?;
                }
                Ok(())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(self, f)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                struct IdVisitor;
                impl<'de> Visitor<'de> for IdVisitor {
                    type Value = $name;
                    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                        write!(f, "a hex-encoded {}", $kind)
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        v.parse().map_err(E::custom)
                    }
                }
                deserializer.deserialize_str(IdVisitor)
            }
        }
    };
}

hex_id!(
    /// 20-byte account address, displayed as lowercase `0x` hex.
    Address,
    20,
    "address"
);
hex_id!(
    /// 32-byte transaction hash, displayed as lowercase `0x` hex.
    TxHash,
    32,
    "transaction hash"
);

/// Whether a transaction was seen in the public mempool before inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    #[default]
    Private,
}

impl Visibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Visibility::Public => "public",
            Visibility::Private => "private",
        }
    }

    pub fn is_private(self) -> bool {
        self == Visibility::Private
    }
}

impl fmt::Display for Visibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label-provider MEV classification of a single transaction.
///
/// `SandwichVictim` is the provider's `sandwich` tag: it always marks the
/// victim, never one of the attacker legs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum MevType {
    Swap,
    #[default]
    NoneLabel,
    Arbitrage,
    Liquidation,
    Frontrun,
    Backrun,
    SandwichVictim,
}

impl MevType {
    pub const ALL: [MevType; 7] = [
        MevType::Swap,
        MevType::NoneLabel,
        MevType::Arbitrage,
        MevType::Liquidation,
        MevType::Frontrun,
        MevType::Backrun,
        MevType::SandwichVictim,
    ];

    /// Provider tag string.
    pub fn as_str(self) -> &'static str {
        match self {
            MevType::Swap => "swap",
            MevType::NoneLabel => "none",
            MevType::Arbitrage => "arbitrage",
            MevType::Liquidation => "liquidation",
            MevType::Frontrun => "frontrun",
            MevType::Backrun => "backrun",
            MevType::SandwichVictim => "sandwich",
        }
    }

    /// Strict parse of a provider tag (case-insensitive).
    pub fn from_tag(tag: &str) -> Option<MevType> {
        let tag = tag.trim();
        MevType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str().eq_ignore_ascii_case(tag))
    }

    /// Lenient parse: unknown tags map to `NoneLabel` with a warning.
    pub fn from_tag_lenient(tag: &str) -> MevType {
        match MevType::from_tag(tag) {
            Some(t) => t,
            None => {
                if !tag.trim().is_empty() {
                    log::warn!("unknown mev_type tag {:?}; treating as none", tag);
                }
                MevType::NoneLabel
            }
        }
    }
}

impl fmt::Display for MevType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for MevType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for MevType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TagVisitor;
        impl<'de> Visitor<'de> for TagVisitor {
            type Value = MevType;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an mev_type tag")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<MevType, E> {
                Ok(MevType::from_tag_lenient(v))
            }
            fn visit_unit<E: de::Error>(self) -> Result<MevType, E> {
                Ok(MevType::NoneLabel)
            }
        }
        deserializer.deserialize_str(TagVisitor)
    }
}

/// One included transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub block_number: u64,
    pub tx_index: u32,
    pub timestamp: u64,
    pub tx_hash: TxHash,
    #[serde(rename = "from")]
    pub sender: Address,
    #[serde(rename = "to", default)]
    pub destination: Option<Address>,
    #[serde(default)]
    pub visibility: Visibility,
    #[serde(default)]
    pub mev_type: MevType,
    #[serde(default)]
    pub protocol: Option<String>,
    #[serde(default)]
    pub user_loss_usd: Option<Usd>,
    #[serde(default)]
    pub extractor_profit_usd: Option<Usd>,
    #[serde(default)]
    pub swap_volume_usd: Option<Usd>,
    #[serde(default)]
    pub swap_count: Option<u64>,
}

impl TxRecord {
    /// Minimal record with no labels or monetized fields.
    pub fn new(block_number: u64, tx_index: u32, timestamp: u64, tx_hash: TxHash, sender: Address) -> Self {
        TxRecord {
            block_number,
            tx_index,
            timestamp,
            tx_hash,
            sender,
            destination: None,
            visibility: Visibility::Private,
            mev_type: MevType::NoneLabel,
            protocol: None,
            user_loss_usd: None,
            extractor_profit_usd: None,
            swap_volume_usd: None,
            swap_count: None,
        }
    }

    /// Chain position key.
    pub fn position(&self) -> (u64, u32) {
        (self.block_number, self.tx_index)
    }
}

/// Inclusive block window, optionally tagged with a month label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRange {
    pub start_block: u64,
    pub end_block: u64,
    #[serde(default)]
    pub label: Option<String>,
}

impl BlockRange {
    pub fn new(start_block: u64, end_block: u64) -> Self {
        BlockRange {
            start_block,
            end_block,
            label: None,
        }
    }

    pub fn labeled(start_block: u64, end_block: u64, label: impl Into<String>) -> Self {
        BlockRange {
            start_block,
            end_block,
            label: Some(label.into()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.start_block <= self.end_block
    }

    pub fn contains(&self, block: u64) -> bool {
        self.start_block <= block && block <= self.end_block
    }

    pub fn overlaps(&self, other: &BlockRange) -> bool {
        self.start_block <= other.end_block && other.start_block <= self.end_block
    }

    pub fn display_label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None => alloc::format!("{}-{}", self.start_block, self.end_block),
        }
    }
}

/// Round half away from zero to cents.
pub fn round_cents(v: Usd) -> Usd {
    v.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero)
}

/// Renders a USD amount with exactly two decimal places.
pub fn format_usd(v: Usd) -> String {
    let mut r = round_cents(v);
    r.rescale(2);
    r.to_string()
}

/// Serde adapter writing USD amounts as two-decimal strings.
pub mod usd2 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Usd, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_usd(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Usd, D::Error> {
        <Usd as Deserialize>::deserialize(d)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<Usd>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => s.serialize_some(&format_usd(*v)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Usd>, D::Error> {
            Option::<Usd>::deserialize(d)
        }
    }
}

/// Sum of the present values, plus the number of absent ones.
pub fn sum_present<I: IntoIterator<Item = Option<Usd>>>(values: I) -> (Usd, usize) {
    let mut total = Usd::ZERO;
    let mut missing = 0;
    for v in values {
        match v {
            Some(v) => total += v,
            None => missing += 1,
        }
    }
    (total, missing)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_parse_is_case_and_prefix_insensitive() {
        let lower: TxHash = "0xab00000000000000000000000000000000000000000000000000000000000001"
            .parse()
            .unwrap();
        let upper: TxHash = "AB00000000000000000000000000000000000000000000000000000000000001"
            .parse()
            .unwrap();
        assert_eq!(lower, upper);
        assert_eq!(
            upper.to_string(),
            "0xab00000000000000000000000000000000000000000000000000000000000001"
        );
    }

    #[test]
    fn address_rejects_wrong_length() {
        assert!("0x1234".parse::<Address>().is_err());
        assert!("0xzz00000000000000000000000000000000000000".parse::<Address>().is_err());
    }

    #[test]
    fn mev_tags_round_trip_and_unknown_maps_to_none() {
        for t in MevType::ALL {
            assert_eq!(MevType::from_tag(t.as_str()), Some(t));
        }
        assert_eq!(MevType::from_tag("SANDWICH"), Some(MevType::SandwichVictim));
        assert_eq!(MevType::from_tag_lenient("jit"), MevType::NoneLabel);
        let parsed: MevType = serde_json::from_str("\"Frontrun\"").unwrap();
        assert_eq!(parsed, MevType::Frontrun);
    }

    #[test]
    fn usd_formatting_has_two_places() {
        assert_eq!(format_usd(Usd::new(5, 0)), "5.00");
        assert_eq!(format_usd(Usd::new(12345, 3)), "12.35");
        assert_eq!(format_usd(Usd::new(-5, 3)), "-0.01");
    }

    #[test]
    fn tx_record_json_uses_from_to_names() {
        let r = TxRecord::new(1, 0, 12, TxHash([1; 32]), Address([2; 20]));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"from\":\"0x0202"));
        let back: TxRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
