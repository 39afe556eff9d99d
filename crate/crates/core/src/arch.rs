//! Target architectures and their feature flags.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

/// The supported memory models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    Sc,
    Tso,
    /// Revised ARMv8: ARM reordering over a flat multi-copy-atomic store.
    ArmMca,
    /// Original ARMv8 and earlier: ARM reordering over the write-list store.
    ArmNmca,
    Power,
}

impl ArchKind {
    pub const ALL: [ArchKind; 5] = [
        ArchKind::Sc,
        ArchKind::Tso,
        ArchKind::ArmMca,
        ArchKind::ArmNmca,
        ArchKind::Power,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Sc => "sc",
            ArchKind::Tso => "tso",
            ArchKind::ArmMca => "armv8-mca",
            ArchKind::ArmNmca => "arm-nmca",
            ArchKind::Power => "power",
        }
    }

    /// Whether the storage subsystem is the flat multi-copy-atomic map
    /// (as opposed to the write list).
    pub fn multicopy_atomic(self) -> bool {
        matches!(self, ArchKind::Sc | ArchKind::Tso | ArchKind::ArmMca)
    }

    /// Whether the write list uses the lightweight-fence extensions.
    pub fn lightweight_fences(self) -> bool {
        self == ArchKind::Power
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl FromStr for ArchKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(ArchKind::Sc),
            "tso" | "x86" | "x86-tso" => Ok(ArchKind::Tso),
            "armv8-mca" | "arm-mca" | "armv8.4" => Ok(ArchKind::ArmMca),
            "arm-nmca" | "arm" => Ok(ArchKind::ArmNmca),
            "power" | "ppc" => Ok(ArchKind::Power),
            other => Err(format!(
                "unknown architecture `{other}` (expected sc, tso, armv8-mca, arm-nmca or power)"
            )),
        }
    }
}

/// An architecture with its specialised-rule feature flags. Write
/// elimination and load-load speculation default to on for the ARM and
/// POWER variants and off for SC and TSO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub kind: ArchKind,
    pub write_elimination: bool,
    pub load_speculation: bool,
}

impl Architecture {
    pub fn new(kind: ArchKind) -> Architecture {
        let weak = matches!(kind, ArchKind::ArmMca | ArchKind::ArmNmca | ArchKind::Power);
        Architecture {
            kind,
            write_elimination: weak,
            load_speculation: weak,
        }
    }

    pub fn sc() -> Architecture {
        Architecture::new(ArchKind::Sc)
    }

    pub fn tso() -> Architecture {
        Architecture::new(ArchKind::Tso)
    }

    pub fn arm_mca() -> Architecture {
        Architecture::new(ArchKind::ArmMca)
    }

    pub fn arm_nmca() -> Architecture {
        Architecture::new(ArchKind::ArmNmca)
    }

    pub fn power() -> Architecture {
        Architecture::new(ArchKind::Power)
    }

    /// Internal choice and loop unfolding may resolve underneath a pending
    /// prefix on every architecture except SC, which keeps strict program
    /// order for all steps.
    pub fn tau_promotes(&self) -> bool {
        self.kind != ArchKind::Sc
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_flags() {
        assert!(!Architecture::sc().write_elimination);
        assert!(!Architecture::tso().write_elimination);
        assert!(!Architecture::tso().load_speculation);
        assert!(Architecture::arm_mca().write_elimination);
        assert!(Architecture::arm_nmca().load_speculation);
        assert!(Architecture::power().write_elimination);
    }

    #[test]
    fn storage_selection() {
        assert!(ArchKind::Sc.multicopy_atomic());
        assert!(ArchKind::Tso.multicopy_atomic());
        assert!(ArchKind::ArmMca.multicopy_atomic());
        assert!(!ArchKind::ArmNmca.multicopy_atomic());
        assert!(!ArchKind::Power.multicopy_atomic());
        assert!(ArchKind::Power.lightweight_fences());
        assert!(!ArchKind::ArmNmca.lightweight_fences());
    }

    #[test]
    fn parse_names() {
        assert_eq!("tso".parse::<ArchKind>().unwrap(), ArchKind::Tso);
        assert_eq!("ARM-NMCA".parse::<ArchKind>().unwrap(), ArchKind::ArmNmca);
        assert!("riscv".parse::<ArchKind>().is_err());
    }
}
