use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// High-level routing command given to the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntentCommand {
    GoStraight,
    TurnLeft,
    TurnRight,
    UTurn,
    LaneChangeLeft,
    LaneChangeRight,
}

impl IntentCommand {
    pub const ALL: [IntentCommand; 6] = [
        IntentCommand::GoStraight,
        IntentCommand::TurnLeft,
        IntentCommand::TurnRight,
        IntentCommand::UTurn,
        IntentCommand::LaneChangeLeft,
        IntentCommand::LaneChangeRight,
    ];

    pub fn as_text(&self) -> &'static str {
        match self {
            IntentCommand::GoStraight => "go straight",
            IntentCommand::TurnLeft => "turn left",
            IntentCommand::TurnRight => "turn right",
            IntentCommand::UTurn => "u-turn",
            IntentCommand::LaneChangeLeft => "lane change left",
            IntentCommand::LaneChangeRight => "lane change right",
        }
    }
}

impl fmt::Display for IntentCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_text())
    }
}

impl FromStr for IntentCommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        IntentCommand::ALL
            .into_iter()
            .find(|c| c.as_text() == s)
            .ok_or_else(|| Error::parse(0, format!("unknown intent command `{s}`")))
    }
}
