//! Community involvement levels.
//!
//! A project is described along four dimensions: who started it
//! (initiative), who shapes its goals and methods (design), who runs it day
//! to day (operations) and who controls the resulting data (governance).
//! Each is coded `E` (externally led), `S` (shared or co-shaped) or `C`
//! (community-led). Those codes, plus whether the community was merely
//! consulted, map onto five levels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Code {
    /// Externally led.
    E,
    /// Shared or co-shaped.
    S,
    /// Community-led.
    C,
}

impl Code {
    pub const ALL: [Code; 3] = [Code::E, Code::S, Code::C];

    fn from_char(c: char) -> Option<Code> {
        match c.to_ascii_uppercase() {
            'E' => Some(Code::E),
            'S' => Some(Code::S),
            'C' => Some(Code::C),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Code::E => 'E',
            Code::S => 'S',
            Code::C => 'C',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InvolvementProfile {
    pub initiative: Code,
    pub design: Code,
    pub operations: Code,
    pub governance: Code,
    /// The community was consulted but contributed neither data nor labour.
    pub consultation_only: bool,
}

impl InvolvementProfile {
    pub fn new(initiative: Code, design: Code, operations: Code, governance: Code) -> Self {
        InvolvementProfile {
            initiative,
            design,
            operations,
            governance,
            consultation_only: false,
        }
    }

    pub fn consulted(mut self) -> Self {
        self.consultation_only = true;
        self
    }

    pub fn codes(&self) -> [Code; 4] {
        [self.initiative, self.design, self.operations, self.governance]
    }

    /// The profile as a four-letter I/D/O/G string, e.g. `EESC`.
    pub fn code_string(&self) -> String {
        self.codes().iter().map(|c| c.as_char()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpectrumError {
    #[error("a consultation-only profile must be externally led on every dimension")]
    InvalidProfile,
    #[error("expected four letters from E/S/C, got {0:?}")]
    BadCode(String),
}

impl FromStr for InvolvementProfile {
    type Err = SpectrumError;

    /// Parses `IDOG` codes, e.g. `EESC`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let codes: Option<Vec<Code>> = s.trim().chars().map(Code::from_char).collect();
        match codes.as_deref() {
            Some(&[i, d, o, g]) => Ok(InvolvementProfile::new(i, d, o, g)),
            _ => Err(SpectrumError::BadCode(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InvolvementLevel(u8);

impl InvolvementLevel {
    pub fn new(level: u8) -> Option<Self> {
        (1..=5).contains(&level).then_some(InvolvementLevel(level))
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        match self.0 {
            1 => "Community consulted",
            2 => "Community engaged, externally led",
            3 => "Community-led operations, externally designed",
            4 => "Community-led with co-shaped design",
            _ => "Fully community-initiated and governed",
        }
    }
}

impl fmt::Display for InvolvementLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Level {}: {}", self.0, self.label())
    }
}

/// Places a profile on the five-level spectrum.
///
/// Rules are checked in order:
/// 1. every dimension community-led: level 5;
/// 2. design shared or community-led: level 4;
/// 3. external design with community-led operations: level 3;
/// 4. consultation only: level 1;
/// 5. anything else: level 2.
pub fn classify(profile: &InvolvementProfile) -> Result<InvolvementLevel, SpectrumError> {
    if profile.consultation_only && profile.codes().iter().any(|&c| c != Code::E) {
        return Err(SpectrumError::InvalidProfile);
    }
    let level = if profile.codes().iter().all(|&c| c == Code::C) {
        5
    } else if matches!(profile.design, Code::S | Code::C) {
        4
    } else if profile.operations == Code::C {
        3
    } else if profile.consultation_only {
        1
    } else {
        2
    };
    Ok(InvolvementLevel(level))
}

/// A project from the reference mapping of prior work.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceProject {
    pub work: &'static str,
    pub language: &'static str,
    pub profile: InvolvementProfile,
    pub level: u8,
}

const fn row(
    work: &'static str,
    language: &'static str,
    codes: [Code; 4],
    level: u8,
) -> ReferenceProject {
    ReferenceProject {
        work,
        language,
        profile: InvolvementProfile {
            initiative: codes[0],
            design: codes[1],
            operations: codes[2],
            governance: codes[3],
            consultation_only: false,
        },
        level,
    }
}

use Code::{C, E, S};

/// Published placements of corpus-gathering projects for very low-resource
/// languages.
pub const REFERENCE_PROJECTS: [ReferenceProject; 7] = [
    row("Petrariu et al.", "Aromanian", [E, E, E, E], 2),
    row("Li et al.", "Khinalug", [E, E, E, E], 2),
    row("Prabowo et al.", "Meher/Woirata", [E, E, C, S], 3),
    row("Cox et al.", "Tsuut'ina", [E, S, S, S], 4),
    row("Frontull et al.", "Ladin", [S, S, C, S], 4),
    row("Krajinovic et al.", "Nafsan", [S, S, C, S], 4),
    row("Hula community platform", "Hula", [C, C, C, C], 5),
];

/// One line of batch input: `IDOG [consulted]`, optionally prefixed with a
/// project name and a tab.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileLine {
    pub name: Option<String>,
    pub profile: InvolvementProfile,
}

impl FromStr for ProfileLine {
    type Err = SpectrumError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let (name, rest) = match line.split_once('\t') {
            Some((name, rest)) => (Some(name.trim().to_owned()), rest),
            None => (None, line),
        };
        let mut words = rest.split_whitespace();
        let code = words.next().ok_or_else(|| SpectrumError::BadCode(String::new()))?;
        let mut profile: InvolvementProfile = code.parse()?;
        match words.next() {
            None => {}
            Some(flag) if matches!(flag, "consulted" | "consultation" | "--consultation") => {
                profile.consultation_only = true
            }
            Some(_) => return Err(SpectrumError::BadCode(rest.to_owned())),
        }
        Ok(ProfileLine { name, profile })
    }
}

/// Renders classified profiles as a table with I, D, O, G and level columns.
/// Profiles that do not follow the usual stacking (community initiative with
/// external design, for instance) are marked as extrapolated.
pub fn render_report(rows: &[(ProfileLine, InvolvementLevel)]) -> String {
    use std::fmt::Write as _;
    let width = rows
        .iter()
        .map(|(l, _)| l.name.as_deref().unwrap_or("-").chars().count())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut out = format!("{:<width$}  I D O G  Level  Label\n", "Work");
    for (line, level) in rows {
        let codes: Vec<String> = line.profile.codes().iter().map(|c| c.as_char().to_string()).collect();
        let _ = write!(
            out,
            "{:<width$}  {}  {:>5}  {}",
            line.name.as_deref().unwrap_or("-"),
            codes.join(" "),
            level.level(),
            level.label()
        );
        if !is_stacked(&line.profile) {
            out.push_str(" (extrapolated)");
        }
        out.push('\n');
    }
    out
}

/// Whether the codes never increase in community control from one
/// dimension to the next among initiative, design and operations.
pub fn is_stacked(profile: &InvolvementProfile) -> bool {
    profile.initiative <= profile.design && profile.design <= profile.operations
}
