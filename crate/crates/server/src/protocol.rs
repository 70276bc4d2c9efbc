//! JSON messages exchanged over the socket, one per text frame.

use movingout::geometry::Rect;
use movingout::metrics::MetricsReport;
use movingout::physics::{ActionCommand, ItemShape, SizeClass, WorldState};
use movingout::rollout::SelectMode;
use serde::{Deserialize, Serialize};

/// Catalog id or map file path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapRef {
    Id(u32),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub map: MapRef,
    /// Which agent the human drives: `"i"`/`"agent-i"` or `"j"`/`"agent-j"`.
    pub role: String,
    pub policy: String,
    #[serde(default)]
    pub mode: SelectMode,
    #[serde(default)]
    pub seed: u64,
    /// Heading noise for scripted partners.
    #[serde(default)]
    pub noise: f64,
    /// Dynamics model file, needed for bass-model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanAction {
    #[serde(rename = "move")]
    pub move_distance: f64,
    pub cos: f64,
    pub sin: f64,
    #[serde(default, deserialize_with = "flag")]
    pub grasp: bool,
}

// Clients send grasp as either a boolean or 0/1.
fn flag<'de, D: serde::Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::Bool(b) => Ok(b),
        serde_json::Value::Number(n) => Ok(n.as_f64().is_some_and(|v| v != 0.0)),
        other => Err(serde::de::Error::custom(format!("grasp must be a bool or number, got {other}"))),
    }
}

impl HumanAction {
    pub fn to_command(self) -> ActionCommand {
        ActionCommand::from_array([self.move_distance, self.cos, self.sin, if self.grasp { 1.0 } else { 0.0 }])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMsg {
    Hello(Hello),
    Action(HumanAction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub x: f64,
    pub y: f64,
    pub cos: f64,
    pub sin: f64,
    pub hold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub x: f64,
    pub y: f64,
    pub cos: f64,
    pub sin: f64,
    pub size: SizeClass,
    pub shape: ItemShape,
    pub radius: f64,
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMsg {
    pub t: usize,
    pub agents: Vec<AgentView>,
    pub items: Vec<ItemView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walls: Option<Vec<Rect>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goals: Option<Vec<Rect>>,
    /// Present in the first message only, with the human's agent index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human: Option<usize>,
}

impl StateMsg {
    pub fn snapshot(state: &WorldState, t: usize) -> StateMsg {
        StateMsg {
            t,
            agents: state
                .agents
                .iter()
                .map(|a| AgentView {
                    x: a.position.x,
                    y: a.position.y,
                    cos: a.heading.cos(),
                    sin: a.heading.sin(),
                    hold: a.hold,
                })
                .collect(),
            items: state
                .items
                .iter()
                .enumerate()
                .map(|(k, it)| ItemView {
                    x: it.position.x,
                    y: it.position.y,
                    cos: it.angle.cos(),
                    sin: it.angle.sin(),
                    size: it.size,
                    shape: it.shape,
                    radius: it.footprint_radius,
                    delivered: state.item_delivered(k),
                })
                .collect(),
            walls: None,
            goals: None,
            session: None,
            human: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndMsg {
    pub metrics: MetricsReport,
    /// `all-delivered` or `timeout`.
    pub reason: String,
    pub steps: usize,
    /// Ticks whose processing took longer than the tick period.
    pub overruns: usize,
    /// Where the session trajectory was written, when logging is on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMsg {
    State(StateMsg),
    End(EndMsg),
    Error { message: String },
}

impl ServerMsg {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}
