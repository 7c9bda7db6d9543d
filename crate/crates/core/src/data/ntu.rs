//! Reader for the NTU RGB+D `.skeleton` text format.
//!
//! Layout, one value group per line:
//!
//! ```text
//! <frame count>
//! per frame:
//!   <body count>
//!   per body:
//!     <body info: 10 tracking fields>
//!     <joint count>
//!     per joint: x y z depthX depthY colorX colorY orientW orientX orientY orientZ state
//! ```
//!
//! Only the camera-space `x y z` triple of each joint is kept. Bodies beyond
//! the second slot of a frame are dropped; missing bodies are zero-filled.

use ndarray::Array4;

use super::{SkeletonSequence, MAX_BODIES, NTU_JOINTS, SPATIAL_DIMS};
use crate::{Error, Result};

/// Metadata encoded in an NTU file name such as `S001C002P003R002A013`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NtuFileMeta {
    pub setup: u32,
    pub camera: u32,
    pub subject: u32,
    pub replication: u32,
    /// 1-based action code as it appears in the file name.
    pub action: u32,
}

impl NtuFileMeta {
    /// Decodes the `SsssCcccPpppRrrrAaaa` stem; directories and extensions are ignored.
    pub fn from_filename(name: &str) -> Result<Self> {
        let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
        let stem = base.split('.').next().unwrap_or(base);
        let bytes = stem.as_bytes();
        if bytes.len() != 20 {
            return Err(Error::Filename(name.to_string()));
        }
        let field = |idx: usize, tag: u8| -> Result<u32> {
            let start = idx * 4;
            if bytes[start] != tag {
                return Err(Error::Filename(name.to_string()));
            }
            stem[start + 1..start + 4]
                .parse::<u32>()
                .map_err(|_| Error::Filename(name.to_string()))
        };
        let meta = NtuFileMeta {
            setup: field(0, b'S')?,
            camera: field(1, b'C')?,
            subject: field(2, b'P')?,
            replication: field(3, b'R')?,
            action: field(4, b'A')?,
        };
        if meta.action == 0 {
            return Err(Error::Filename(name.to_string()));
        }
        Ok(meta)
    }

    /// 0-based class index.
    pub fn label(&self) -> usize {
        self.action as usize - 1
    }

    pub fn stem(&self) -> String {
        format!(
            "S{:03}C{:03}P{:03}R{:03}A{:03}",
            self.setup, self.camera, self.subject, self.replication, self.action
        )
    }
}

struct LineCursor<'a> {
    text: &'a str,
    offset: usize,
    line: usize,
}

struct Line<'a> {
    number: usize,
    offset: usize,
    content: &'a str,
}

impl<'a> LineCursor<'a> {
    fn new(text: &'a str) -> Self {
        LineCursor {
            text,
            offset: 0,
            line: 0,
        }
    }

    /// Next non-blank line.
    fn next_line(&mut self) -> Option<Line<'a>> {
        while self.offset < self.text.len() {
            let rest = &self.text[self.offset..];
            let len = rest.find('\n').map(|i| i + 1).unwrap_or(rest.len());
            let start = self.offset;
            self.offset += len;
            self.line += 1;
            let content = rest[..len].trim();
            if !content.is_empty() {
                return Some(Line {
                    number: self.line,
                    offset: start,
                    content,
                });
            }
        }
        None
    }

    fn expect(&mut self, what: impl FnOnce() -> String) -> Result<Line<'a>> {
        self.next_line().ok_or_else(|| Error::Parse {
            line: self.line + 1,
            offset: self.text.len(),
            message: format!("unexpected end of stream while reading {}", what()),
        })
    }
}

fn parse_count(line: &Line<'_>, what: &str) -> Result<usize> {
    let token = line.content.split_whitespace().next().unwrap_or("");
    token.parse::<usize>().map_err(|_| Error::Parse {
        line: line.number,
        offset: line.offset,
        message: format!("expected {what}, found `{token}`"),
    })
}

/// Parses one `.skeleton` file into a `T × 2 × 25 × 3` sequence.
pub fn parse_ntu_skeleton_file(bytes: &[u8], meta: &NtuFileMeta) -> Result<SkeletonSequence> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let offset = e.valid_up_to();
        Error::Parse {
            line: bytes[..offset].iter().filter(|&&b| b == b'\n').count() + 1,
            offset,
            message: "stream is not valid UTF-8 text".into(),
        }
    })?;
    let mut cursor = LineCursor::new(text);
    let header = cursor.expect(|| "the frame count".into())?;
    let frame_count = parse_count(&header, "frame count")?;
    if frame_count == 0 {
        return Err(Error::InsufficientFrames { needed: 1, got: 0 });
    }

    let mut frames = Array4::<f64>::zeros((frame_count, MAX_BODIES, NTU_JOINTS, SPATIAL_DIMS));
    for t in 0..frame_count {
        let frame_no = t + 1;
        let line = cursor.expect(|| format!("the body count of frame {frame_no}"))?;
        let body_count = parse_count(&line, "body count")?;
        for body in 0..body_count {
            cursor.expect(|| format!("body {} info of frame {frame_no}", body + 1))?;
            let line = cursor.expect(|| format!("joint count of frame {frame_no}"))?;
            let joints = parse_count(&line, "joint count")?;
            if joints != NTU_JOINTS {
                return Err(Error::TopologyMismatch {
                    expected: NTU_JOINTS,
                    found: joints,
                });
            }
            for joint in 0..joints {
                let line = cursor.expect(|| {
                    format!("joint {} of body {} in frame {frame_no}", joint + 1, body + 1)
                })?;
                let mut tokens = line.content.split_whitespace();
                for c in 0..SPATIAL_DIMS {
                    let token = tokens.next().ok_or_else(|| Error::Parse {
                        line: line.number,
                        offset: line.offset,
                        message: format!("joint row has fewer than {SPATIAL_DIMS} values"),
                    })?;
                    let value: f64 = token.parse().map_err(|_| Error::Parse {
                        line: line.number,
                        offset: line.offset,
                        message: format!("non-numeric coordinate `{token}`"),
                    })?;
                    if !value.is_finite() {
                        return Err(Error::Parse {
                            line: line.number,
                            offset: line.offset,
                            message: format!("non-finite coordinate `{token}`"),
                        });
                    }
                    if body < MAX_BODIES {
                        frames[[t, body, joint, c]] = value;
                    }
                }
            }
        }
    }

    Ok(SkeletonSequence {
        frames,
        label: meta.label(),
        subject_id: meta.subject,
        camera_id: meta.camera,
        setup_id: meta.setup,
        source_id: meta.stem(),
    })
}

/// Action names of NTU RGB+D 120, indexed by 0-based class id (the first 60
/// are NTU RGB+D 60).
pub const NTU_ACTION_LABELS: [&str; 120] = [
    "drink water",
    "eat meal/snack",
    "brushing teeth",
    "brushing hair",
    "drop",
    "pickup",
    "throw",
    "sitting down",
    "standing up (from sitting position)",
    "clapping",
    "reading",
    "writing",
    "tear up paper",
    "wear jacket",
    "take off jacket",
    "wear a shoe",
    "take off a shoe",
    "wear on glasses",
    "take off glasses",
    "put on a hat/cap",
    "take off a hat/cap",
    "cheer up",
    "hand waving",
    "kicking something",
    "reach into pocket",
    "hopping (one foot jumping)",
    "jump up",
    "make a phone call/answer phone",
    "playing with phone/tablet",
    "typing on a keyboard",
    "pointing to something with finger",
    "taking a selfie",
    "check time (from watch)",
    "rub two hands together",
    "nod head/bow",
    "shake head",
    "wipe face",
    "salute",
    "put the palms together",
    "cross hands in front (say stop)",
    "sneeze/cough",
    "staggering",
    "falling",
    "touch head (headache)",
    "touch chest (stomachache/heart pain)",
    "touch back (backache)",
    "touch neck (neckache)",
    "nausea or vomiting condition",
    "use a fan (with hand or paper)/feeling warm",
    "punching/slapping other person",
    "kicking other person",
    "pushing other person",
    "pat on back of other person",
    "point finger at the other person",
    "hugging other person",
    "giving something to other person",
    "touch other person's pocket",
    "handshaking",
    "walking towards each other",
    "walking apart from each other",
    "put on headphone",
    "take off headphone",
    "shoot at the basket",
    "bounce ball",
    "tennis bat swing",
    "juggling table tennis balls",
    "hush (quite)",
    "flick hair",
    "thumb up",
    "thumb down",
    "make ok sign",
    "make victory sign",
    "staple book",
    "counting money",
    "cutting nails",
    "cutting paper (using scissors)",
    "snapping fingers",
    "open bottle",
    "sniff (smell)",
    "squat down",
    "toss a coin",
    "fold paper",
    "ball up paper",
    "play magic cube",
    "apply cream on face",
    "apply cream on hand back",
    "put on bag",
    "take off bag",
    "put something into a bag",
    "take something out of a bag",
    "open a box",
    "move heavy objects",
    "shake fist",
    "throw up cap/hat",
    "hands up (both hands)",
    "cross arms",
    "arm circles",
    "arm swings",
    "running on the spot",
    "butt kicks (kick backward)",
    "cross toe touch",
    "side kick",
    "yawn",
    "stretch oneself",
    "blow nose",
    "hit other person with something",
    "wield knife towards other person",
    "knock over other person (hit other person)",
    "grab other person's stuff",
    "shoot at other person with a gun",
    "step on foot",
    "high-five",
    "cheers and drink",
    "carry something with other person",
    "take a photo of other person",
    "follow other person",
    "whisper in other person's ear",
    "exchange things with other person",
    "support somebody with hand",
    "finger-guessing game (playing rock-paper-scissors)",
];

fn normalize_name(name: &str) -> String {
    name.trim()
        .to_lowercase()
        .replace('\u{2019}', "'")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Looks up the 0-based NTU class id of an action name (case and whitespace
/// insensitive).
pub fn ntu_class_index(name: &str) -> Option<usize> {
    let wanted = normalize_name(name);
    NTU_ACTION_LABELS
        .iter()
        .position(|label| normalize_name(label) == wanted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joint_row(x: f64, y: f64, z: f64) -> String {
        format!("{x} {y} {z} 250.1 200.2 960.3 540.4 0.1 0.2 0.3 0.4 2\n")
    }

    fn frame_text(bodies: usize, value: f64) -> String {
        let mut s = format!("{bodies}\n");
        for b in 0..bodies {
            s.push_str(&format!("7209{b} 0 1 1 1 1 0 0.01 0.02 2\n25\n"));
            for _ in 0..25 {
                s.push_str(&joint_row(value, value, value));
            }
        }
        s
    }

    fn meta() -> NtuFileMeta {
        NtuFileMeta::from_filename("S001C001P001R001A043").unwrap()
    }

    #[test]
    fn filename_decodes_codes() {
        let m = meta();
        assert_eq!((m.setup, m.camera, m.subject, m.replication), (1, 1, 1, 1));
        assert_eq!(m.label(), 42);
        let real = NtuFileMeta::from_filename("data/nturgbd/S017C003P020R002A060.skeleton").unwrap();
        assert_eq!(real.setup, 17);
        assert_eq!(real.camera, 3);
        assert_eq!(real.subject, 20);
        assert_eq!(real.replication, 2);
        assert_eq!(real.label(), 59);
        assert_eq!(NTU_ACTION_LABELS[real.label()], "walking apart from each other");
        assert_eq!(NTU_ACTION_LABELS[m.label()], "falling");
    }

    #[test]
    fn filename_rejects_garbage() {
        assert!(NtuFileMeta::from_filename("S001C001P001R001").is_err());
        assert!(NtuFileMeta::from_filename("X001C001P001R001A001").is_err());
        assert!(NtuFileMeta::from_filename("S001C001P001R001A000").is_err());
        assert!(NtuFileMeta::from_filename("S0x1C001P001R001A001").is_err());
    }

    #[test]
    fn single_zero_frame_pads_second_body() {
        let text = format!("1\n{}", frame_text(1, 0.0));
        let seq = parse_ntu_skeleton_file(text.as_bytes(), &meta()).unwrap();
        assert_eq!(seq.frames.dim(), (1, 2, 25, 3));
        assert!(seq.frames.iter().all(|&v| v == 0.0));
        assert_eq!(seq.label, 42);
    }

    #[test]
    fn keeps_values_and_drops_third_body() {
        let text = format!("2\n{}{}", frame_text(3, 0.5), frame_text(0, 0.0));
        let seq = parse_ntu_skeleton_file(text.as_bytes(), &meta()).unwrap();
        assert_eq!(seq.frames[[0, 0, 24, 2]], 0.5);
        assert_eq!(seq.frames[[0, 1, 0, 0]], 0.5);
        assert!(seq.frames.slice(ndarray::s![1, .., .., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncated_stream_reports_missing_frame() {
        let text = format!("2\n{}", frame_text(1, 0.0));
        let err = parse_ntu_skeleton_file(text.as_bytes(), &meta()).unwrap_err();
        match err {
            Error::Parse { offset, message, .. } => {
                assert_eq!(offset, text.len());
                assert!(message.contains("frame 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_joint_count_is_topology_error() {
        let text = "1\n1\n1 0 1 1 1 1 0 0 0 2\n20\n";
        let err = parse_ntu_skeleton_file(text.as_bytes(), &meta()).unwrap_err();
        assert!(matches!(err, Error::TopologyMismatch { expected: 25, found: 20 }));
    }

    #[test]
    fn non_numeric_coordinate_reports_line() {
        let mut text = format!("1\n{}", frame_text(1, 0.0));
        text = text.replacen("0 0 0 250.1", "0 abc 0 250.1", 1);
        let err = parse_ntu_skeleton_file(text.as_bytes(), &meta()).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 5);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_coordinate_rejected() {
        let text = format!("1\n{}", frame_text(1, 0.0)).replacen("0 0 0 250.1", "NaN 0 0 250.1", 1);
        assert!(matches!(
            parse_ntu_skeleton_file(text.as_bytes(), &meta()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn class_lookup_is_lenient_on_case_and_spacing() {
        assert_eq!(ntu_class_index("Typing on a  keyboard"), Some(29));
        assert_eq!(ntu_class_index("use a fan (with hand or paper)/feeling warm"), Some(48));
        assert_eq!(ntu_class_index("touch other person\u{2019}s pocket"), Some(56));
        assert_eq!(ntu_class_index("moonwalk"), None);
    }
}
