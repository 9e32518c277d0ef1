use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The data model version this build reads and writes.
pub const DATA_MODEL_VERSION: DataModelVersion = DataModelVersion::new(1, 0, 0);

/// Three-part `MAJOR.MINOR.PATCH` version of the shared data model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DataModelVersion {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
}

impl DataModelVersion {
    pub const fn new(major: u64, minor: u64, patch: u64) -> Self {
        Self {
            major,
            minor,
            patch,
        }
    }

    /// Whether data written under `self` can be read by a consumer at `consumer`.
    /// Only the major component has to agree.
    pub fn compatible_with(&self, consumer: &DataModelVersion) -> bool {
        versions_compatible(self, consumer)
    }
}

pub fn versions_compatible(producer: &DataModelVersion, consumer: &DataModelVersion) -> bool {
    producer.major == consumer.major
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid data model version `{0}`, expected MAJOR.MINOR.PATCH")]
pub struct ParseVersionError(pub String);

impl FromStr for DataModelVersion {
    type Err = ParseVersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseVersionError(s.to_string());
        let mut parts = s.split('.');
        let mut next = || -> Result<u64, ParseVersionError> {
            let part = parts.next().ok_or_else(err)?;
            // Reject signs, whitespace and leading zeros so rendering is lossless.
            if part.is_empty()
                || !part.bytes().all(|b| b.is_ascii_digit())
                || (part.len() > 1 && part.starts_with('0'))
            {
                return Err(err());
            }
            part.parse().map_err(|_| err())
        };
        let version = DataModelVersion::new(next()?, next()?, next()?);
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(version)
    }
}

impl fmt::Display for DataModelVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

impl Serialize for DataModelVersion {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DataModelVersion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
