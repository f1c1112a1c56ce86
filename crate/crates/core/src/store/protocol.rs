//! JSON request/response messages for the store service.
//!
//! One JSON object per line in each direction. Requests carry an `"op"`
//! field; responses are either an op-specific success object or
//! `{"error": <code>, "detail": {...}}`. See `docs/protocol.md`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AnchorRecord, AnchorScope, AnchorStore, NearFilter, StoreError};
use crate::pose::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    HostAnchor {
        scope: AnchorScope,
        payload: Vec<f64>,
        #[serde(default)]
        approx_position: Option<[f64; 3]>,
        ttl_seconds: u64,
        now: f64,
    },
    ListAnchors {
        scope: AnchorScope,
        #[serde(default)]
        near: Option<NearFilter>,
        now: f64,
    },
    GetAnchor {
        anchor_id: String,
        now: f64,
    },
    ExtendTtl {
        anchor_id: String,
        new_ttl_seconds: u64,
        now: f64,
    },
    UploadMap {
        room_id: String,
        /// base64
        bytes: String,
        expected_version: u64,
        now: f64,
    },
    DownloadMap {
        room_id: String,
    },
    PurgeExpired {
        now: f64,
    },
}

impl Request {
    pub fn is_mutation(&self) -> bool {
        matches!(
            self,
            Request::HostAnchor { .. }
                | Request::ExtendTtl { .. }
                | Request::UploadMap { .. }
                | Request::PurgeExpired { .. }
        )
    }
}

/// Variant order matters for decoding: the first shape that fits wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Error { error: String, detail: Value },
    Hosted { anchor_id: String },
    Anchors { anchor_ids: Vec<String> },
    Anchor { anchor: AnchorRecord },
    Map { bytes: String, version: u64 },
    Version { version: u64 },
    Purged { purged: usize },
    Ok { ok: bool },
}

impl Response {
    pub fn from_error(e: &StoreError) -> Self {
        let detail = match e {
            StoreError::VersionConflict { current_version } => {
                json!({ "current_version": current_version })
            }
            other => json!({ "message": other.to_string() }),
        };
        Response::Error {
            error: e.code().to_owned(),
            detail,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Response::Error {
            error: "bad_request".into(),
            detail: json!({ "message": message.into() }),
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Response::Error { .. })
    }
}

pub fn handle(store: &AnchorStore, request: Request) -> Response {
    let result = match request {
        Request::HostAnchor {
            scope,
            payload,
            approx_position,
            ttl_seconds,
            now,
        } => store
            .host_anchor(scope, &payload, approx_position.map(Vec3::from), ttl_seconds, now)
            .map(|anchor_id| Response::Hosted { anchor_id }),
        Request::ListAnchors { scope, near, now } => Ok(Response::Anchors {
            anchor_ids: store.list_anchors(&scope, near.as_ref(), now),
        }),
        Request::GetAnchor { anchor_id, now } => store
            .get_anchor(&anchor_id, now)
            .map(|anchor| Response::Anchor { anchor }),
        Request::ExtendTtl {
            anchor_id,
            new_ttl_seconds,
            now,
        } => store
            .extend_ttl(&anchor_id, new_ttl_seconds, now)
            .map(|()| Response::Ok { ok: true }),
        Request::UploadMap {
            room_id,
            bytes,
            expected_version,
            now,
        } => {
            let Ok(bytes) = STANDARD.decode(bytes) else {
                return Response::bad_request("bytes is not valid base64");
            };
            store
                .upload_map(&room_id, bytes, expected_version, now)
                .map(|version| Response::Version { version })
        }
        Request::DownloadMap { room_id } => {
            store
                .download_map(&room_id)
                .map(|(bytes, version)| Response::Map {
                    bytes: STANDARD.encode(bytes),
                    version,
                })
        }
        Request::PurgeExpired { now } => Ok(Response::Purged {
            purged: store.purge_expired(now),
        }),
    };
    result.unwrap_or_else(|e| Response::from_error(&e))
}

/// Decodes one request line, applies it, and encodes the response line.
pub fn handle_line(store: &AnchorStore, line: &str) -> (Option<Request>, String) {
    match serde_json::from_str::<Request>(line) {
        Ok(request) => {
            let response = handle(store, request.clone());
            let ok = !response.is_error();
            (ok.then_some(request), encode(&response))
        }
        Err(e) => (None, encode(&Response::bad_request(e.to_string()))),
    }
}

pub fn encode(response: &Response) -> String {
    serde_json::to_string(response).expect("responses always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::RigidPose;

    fn identity_payload() -> Vec<f64> {
        RigidPose::identity().to_row_major().to_vec()
    }

    #[test]
    fn request_wire_shape() {
        let line = r#"{"op":"host_anchor","scope":{"room":"A"},"payload":[1,0,0,0,1,0,0,0,1,0.5,0,2],"ttl_seconds":60,"now":0}"#;
        let req: Request = serde_json::from_str(line).unwrap();
        assert!(matches!(req, Request::HostAnchor { approx_position: None, .. }));
        let back: Request = serde_json::from_str(&serde_json::to_string(&req).unwrap()).unwrap();
        assert_eq!(back, req);

        let req = Request::ListAnchors {
            scope: AnchorScope::Beacon("U1".into()),
            near: Some(NearFilter {
                center: [0.0, 1.0, 2.0],
                radius: 3.0,
            }),
            now: 4.0,
        };
        let v: Value = serde_json::to_value(&req).unwrap();
        assert_eq!(v["op"], "list_anchors");
        assert_eq!(v["scope"]["beacon"], "U1");
        assert_eq!(v["near"]["radius"], 3.0);
    }

    #[test]
    fn responses_decode_to_their_own_variant() {
        let record = AnchorRecord {
            anchor_id: "ab".into(),
            scope: AnchorScope::Room("A".into()),
            payload: RigidPose::identity().to_row_major(),
            approx_position: Some([1.0, 2.0, 3.0]),
            created_at: 1.5,
            ttl_seconds: 9,
        };
        let all = [
            Response::from_error(&StoreError::VersionConflict { current_version: 3 }),
            Response::Hosted {
                anchor_id: "x".into(),
            },
            Response::Anchors {
                anchor_ids: vec!["a".into(), "b".into()],
            },
            Response::Anchor { anchor: record },
            Response::Map {
                bytes: "AAE=".into(),
                version: 2,
            },
            Response::Version { version: 7 },
            Response::Purged { purged: 4 },
            Response::Ok { ok: true },
        ];
        for r in all {
            let back: Response = serde_json::from_str(&encode(&r)).unwrap();
            assert_eq!(back, r);
        }
    }

    #[test]
    fn handle_round_trip() {
        let store = AnchorStore::with_seed(11);
        let (_, line) = handle_line(
            &store,
            &serde_json::to_string(&Request::HostAnchor {
                scope: AnchorScope::Room("A".into()),
                payload: identity_payload(),
                approx_position: None,
                ttl_seconds: 100,
                now: 0.0,
            })
            .unwrap(),
        );
        let Response::Hosted { anchor_id } = serde_json::from_str(&line).unwrap() else {
            panic!("{line}");
        };
        let resp = handle(
            &store,
            Request::GetAnchor {
                anchor_id: anchor_id.clone(),
                now: 1.0,
            },
        );
        match resp {
            Response::Anchor { anchor } => assert_eq!(anchor.anchor_id, anchor_id),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn map_bytes_travel_as_base64() {
        let store = AnchorStore::with_seed(1);
        let up = handle(
            &store,
            Request::UploadMap {
                room_id: "A".into(),
                bytes: STANDARD.encode([0u8, 159, 146, 150]),
                expected_version: 0,
                now: 0.0,
            },
        );
        assert_eq!(up, Response::Version { version: 1 });
        let down = handle(&store, Request::DownloadMap { room_id: "A".into() });
        assert_eq!(
            down,
            Response::Map {
                bytes: STANDARD.encode([0u8, 159, 146, 150]),
                version: 1
            }
        );
    }

    #[test]
    fn errors_carry_codes() {
        let store = AnchorStore::with_seed(1);
        store.upload_map("A", vec![1], 0, 0.0).unwrap();
        let r = handle(
            &store,
            Request::UploadMap {
                room_id: "A".into(),
                bytes: String::new(),
                expected_version: 0,
                now: 0.0,
            },
        );
        let v: Value = serde_json::from_str(&encode(&r)).unwrap();
        assert_eq!(v["error"], "version_conflict");
        assert_eq!(v["detail"]["current_version"], 1);

        let r = handle(&store, Request::DownloadMap { room_id: "Z".into() });
        assert!(matches!(r, Response::Error { ref error, .. } if error == "no_map"));

        let (req, line) = handle_line(&store, r#"{"op":"teleport"}"#);
        assert!(req.is_none());
        assert!(line.contains("bad_request"));

        let (_, line) = handle_line(
            &store,
            r#"{"op":"upload_map","room_id":"A","bytes":"!!","expected_version":1,"now":0}"#,
        );
        assert!(line.contains("bad_request"));
    }
}
