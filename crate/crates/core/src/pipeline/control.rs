use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Runtime session change carried by a CONTROL message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlAction {
    SelectObject {
        u: i64,
        v: i64,
    },
    SetAsset {
        asset_id: String,
    },
    SetGating {
        frame_passer: bool,
        early_stop: bool,
    },
    SetAnchor {
        mode: AnchorModeName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorModeName {
    FitExtent,
    FixedScale,
}

impl ControlAction {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ControlError> {
        serde_json::from_slice(bytes).map_err(|e| ControlError::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("control actions always serialize")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("malformed control: {0}")]
    Malformed(String),
    #[error("no instance at ({u}, {v})")]
    NoInstanceAt { u: i64, v: i64 },
    #[error("unknown asset {0:?}")]
    UnknownAsset(String),
    #[error("invalid anchor: {0}")]
    InvalidAnchor(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shapes() {
        let cases = [
            (r#"{"action":"select_object","u":10,"v":20}"#, ControlAction::SelectObject { u: 10, v: 20 }),
            (r#"{"action":"set_asset","asset_id":"pyramid"}"#, ControlAction::SetAsset { asset_id: "pyramid".into() }),
            (
                r#"{"action":"set_gating","frame_passer":false,"early_stop":true}"#,
                ControlAction::SetGating { frame_passer: false, early_stop: true },
            ),
            (
                r#"{"action":"set_anchor","mode":"fixed_scale","scale":0.5}"#,
                ControlAction::SetAnchor { mode: AnchorModeName::FixedScale, scale: Some(0.5) },
            ),
            (r#"{"action":"set_anchor","mode":"fit_extent"}"#, ControlAction::SetAnchor { mode: AnchorModeName::FitExtent, scale: None }),
        ];
        for (text, action) in cases {
            assert_eq!(ControlAction::from_json(text.as_bytes()).unwrap(), action);
            assert_eq!(String::from_utf8(action.to_json()).unwrap(), text);
        }
    }

    #[test]
    fn rejects_unknown_action_and_fields() {
        assert!(ControlAction::from_json(br#"{"action":"explode"}"#).is_err());
        assert!(ControlAction::from_json(br#"{"action":"set_asset","asset_id":"box","x":1}"#).is_err());
        assert!(ControlAction::from_json(b"not json").is_err());
    }
}
