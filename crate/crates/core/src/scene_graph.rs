//! Hierarchical scene elements, the ego-centred scene graph built from them,
//! and the `[element-relation-attribute]` triplets extracted from the graph.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Finding, Result};
use crate::geometry::{wrap_angle, Point2, Size3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weather {
    #[serde(rename = "type")]
    pub kind: String,
    pub time: String,
    pub level: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Road {
    #[serde(rename = "type")]
    pub kind: String,
    pub structure: String,
    pub direction: String,
    pub function: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FacilityKind {
    Sign,
    Marking,
}

impl FacilityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FacilityKind::Sign => "sign",
            FacilityKind::Marking => "marking",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Facility {
    pub kind: FacilityKind,
    #[serde(rename = "type")]
    pub facility_type: String,
    pub direction: String,
}

/// A traffic participant as seen from the ego vehicle at observation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantView {
    pub category: String,
    pub status: String,
    pub size: Size3,
    /// Ego-frame position in metres (x forward, y left).
    pub location: Point2,
    /// Heading relative to the ego heading, radians.
    pub orientation: f64,
    /// Earlier ego-frame positions, oldest first.
    pub history: Vec<Point2>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneElementSet {
    pub weather: Option<Weather>,
    pub road: Option<Road>,
    pub facilities: Vec<Facility>,
    pub participants: Vec<ParticipantView>,
}

/// Closed vocabularies for element attributes. Extensible through config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Vocabulary {
    pub weather_type: BTreeSet<String>,
    pub weather_time: BTreeSet<String>,
    pub weather_level: BTreeSet<String>,
    pub road_type: BTreeSet<String>,
    pub road_structure: BTreeSet<String>,
    pub road_direction: BTreeSet<String>,
    pub road_function: BTreeSet<String>,
    /// Recommended sign/marking types; not enforced.
    pub facility_type: BTreeSet<String>,
    /// Participant categories recognised in free text (accuracy and
    /// justification checks).
    pub participant_category: BTreeSet<String>,
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary {
            weather_type: set(&["clear", "sunny", "cloudy", "rainy", "foggy", "snowy"]),
            weather_time: set(&["day", "night", "dusk"]),
            weather_level: set(&["easy", "moderate", "hard"]),
            road_type: set(&["urban", "highway", "residential", "parking"]),
            road_structure: set(&["straight", "curve", "intersection", "roundabout"]),
            road_direction: set(&["one-way", "two-way"]),
            road_function: set(&["through", "access", "junction"]),
            facility_type: set(&[
                "stop sign",
                "yield sign",
                "speed limit sign",
                "traffic light",
                "no entry sign",
                "crosswalk",
                "stop line",
                "lane divider",
                "turn arrow",
            ]),
            participant_category: set(&[
                "car",
                "truck",
                "bus",
                "trailer",
                "construction vehicle",
                "pedestrian",
                "cyclist",
                "motorcycle",
                "bicycle",
                "barrier",
                "traffic cone",
            ]),
        }
    }
}

impl Vocabulary {
    /// Closed values for an element attribute, if that attribute is closed.
    pub fn closed_values(&self, kind: ElementKind, attribute: &str) -> Option<&BTreeSet<String>> {
        match (kind, attribute) {
            (ElementKind::Weather, "type") => Some(&self.weather_type),
            (ElementKind::Weather, "time") => Some(&self.weather_time),
            (ElementKind::Weather, "level") => Some(&self.weather_level),
            (ElementKind::Road, "type") => Some(&self.road_type),
            (ElementKind::Road, "structure") => Some(&self.road_structure),
            (ElementKind::Road, "direction") => Some(&self.road_direction),
            (ElementKind::Road, "function") => Some(&self.road_function),
            (ElementKind::Participant, "category") => Some(&self.participant_category),
            _ => None,
        }
    }
}

pub fn validate_elements(e: &SceneElementSet, vocab: &Vocabulary) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut check = |path: &str, value: &str, allowed: &BTreeSet<String>| {
        if !allowed.contains(value) {
            findings.push(Finding::new(
                path,
                format!("'{value}' not in closed vocabulary"),
            ));
        }
    };
    if let Some(w) = &e.weather {
        check("elements.weather.type", &w.kind, &vocab.weather_type);
        check("elements.weather.time", &w.time, &vocab.weather_time);
        check("elements.weather.level", &w.level, &vocab.weather_level);
    }
    if let Some(r) = &e.road {
        check("elements.road.type", &r.kind, &vocab.road_type);
        check("elements.road.structure", &r.structure, &vocab.road_structure);
        check("elements.road.direction", &r.direction, &vocab.road_direction);
        check("elements.road.function", &r.function, &vocab.road_function);
    }
    for (i, f) in e.facilities.iter().enumerate() {
        if f.facility_type.trim().is_empty() {
            findings.push(Finding::new(format!("elements.facilities[{i}].type"), "empty"));
        }
    }
    for (i, p) in e.participants.iter().enumerate() {
        if p.category.trim().is_empty() {
            findings.push(Finding::new(
                format!("elements.participants[{i}].category"),
                "empty category",
            ));
        }
        if !(p.location.x.is_finite() && p.location.y.is_finite()) {
            findings.push(Finding::new(
                format!("elements.participants[{i}].location"),
                "non-finite location",
            ));
        }
        let s = p.size;
        if !(s.length > 0.0 && s.width > 0.0 && s.height > 0.0) {
            findings.push(Finding::new(
                format!("elements.participants[{i}].size"),
                "size components must be positive",
            ));
        }
    }
    findings
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Weather,
    Road,
    Facility,
    Participant,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] = [
        ElementKind::Weather,
        ElementKind::Road,
        ElementKind::Facility,
        ElementKind::Participant,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ElementKind::Weather => "weather",
            ElementKind::Road => "road",
            ElementKind::Facility => "facility",
            ElementKind::Participant => "participant",
        }
    }

    /// Attribute names `extract_triplets` can produce for this kind.
    pub fn attribute_names(&self) -> &'static [&'static str] {
        match self {
            ElementKind::Weather => &["level", "time", "type"],
            ElementKind::Road => &["direction", "function", "structure", "type"],
            ElementKind::Facility => &["direction", "kind", "type"],
            ElementKind::Participant => &[
                "category",
                "coordinates",
                "distance",
                "history",
                "location",
                "orientation",
                "size",
                "status",
            ],
        }
    }
}

impl FromStr for ElementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weather" => Ok(ElementKind::Weather),
            "road" => Ok(ElementKind::Road),
            "facility" => Ok(ElementKind::Facility),
            "participant" => Ok(ElementKind::Participant),
            other => Err(Error::Structure(format!("unknown element kind '{other}'"))),
        }
    }
}

/// One element node: weather, road, or an indexed facility/participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElementRef {
    Weather,
    Road,
    Facility(usize),
    Participant(usize),
}

impl ElementRef {
    pub fn kind(&self) -> ElementKind {
        match self {
            ElementRef::Weather => ElementKind::Weather,
            ElementRef::Road => ElementKind::Road,
            ElementRef::Facility(_) => ElementKind::Facility,
            ElementRef::Participant(_) => ElementKind::Participant,
        }
    }
}

impl fmt::Display for ElementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementRef::Weather => f.write_str("weather"),
            ElementRef::Road => f.write_str("road"),
            ElementRef::Facility(i) => write!(f, "facility[{i}]"),
            ElementRef::Participant(i) => write!(f, "participant[{i}]"),
        }
    }
}

impl FromStr for ElementRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indexed = |prefix: &str| -> Option<usize> {
            s.strip_prefix(prefix)?
                .strip_prefix('[')?
                .strip_suffix(']')?
                .parse()
                .ok()
        };
        match s {
            "weather" => Ok(ElementRef::Weather),
            "road" => Ok(ElementRef::Road),
            _ => indexed("facility")
                .map(ElementRef::Facility)
                .or_else(|| indexed("participant").map(ElementRef::Participant))
                .ok_or_else(|| Error::Structure(format!("bad element label '{s}'"))),
        }
    }
}

impl Serialize for ElementRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ElementRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Ego,
    Element,
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    /// `ego`, an element label such as `participant[0]`, or an attribute name.
    pub label: String,
    /// Rendered attribute value (attribute nodes only).
    pub value: Option<String>,
    /// Raw numeric value kept alongside the rendered one, when there is one.
    pub raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub relation: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeValue {
    pub name: String,
    pub value: String,
    pub raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub element: ElementRef,
    pub relation: String,
    pub attribute: AttributeValue,
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}-{}-{}:{}]",
            self.element, self.relation, self.attribute.name, self.attribute.value
        )
    }
}

pub const SECTOR_LABELS: [&str; 8] = [
    "in front of",
    "front-left of",
    "left of",
    "rear-left of",
    "behind",
    "rear-right of",
    "right of",
    "front-right of",
];

/// Preposition describing where an ego-frame point lies relative to the ego
/// vehicle: eight 45-degree sectors centred on the axes, `at` for the origin.
pub fn spatial_relation(x: f64, y: f64) -> &'static str {
    if x == 0.0 && y == 0.0 {
        return "at";
    }
    let deg = y.atan2(x).to_degrees();
    let idx = ((deg + 22.5).div_euclid(45.0) as i64).rem_euclid(8) as usize;
    SECTOR_LABELS[idx]
}

/// Coarse heading of a participant relative to the ego heading.
pub fn orientation_phrase(relative_yaw: f64) -> &'static str {
    use std::f64::consts::FRAC_PI_4;
    let d = wrap_angle(relative_yaw);
    if d.abs() <= FRAC_PI_4 {
        "same direction"
    } else if d.abs() >= 3.0 * FRAC_PI_4 {
        "oncoming"
    } else if d > 0.0 {
        "crossing left"
    } else {
        "crossing right"
    }
}

pub fn format_metres(v: f64) -> String {
    format!("{} m", fmt1(v))
}

pub(crate) fn fmt1(v: f64) -> String {
    let s = format!("{v:.1}");
    if s == "-0.0" {
        "0.0".to_string()
    } else {
        s
    }
}

struct Attr {
    name: &'static str,
    relation: String,
    value: String,
    raw: Option<f64>,
}

fn attr(name: &'static str, relation: &str, value: impl Into<String>, raw: Option<f64>) -> Attr {
    Attr {
        name,
        relation: relation.to_string(),
        value: value.into(),
        raw,
    }
}

fn participant_attributes(p: &ParticipantView) -> Vec<Attr> {
    let loc = p.location;
    let mut attrs = vec![
        attr("category", "is", p.category.clone(), None),
        attr(
            "distance",
            "is",
            format_metres(loc.norm()),
            Some(loc.norm()),
        ),
        attr(
            "coordinates",
            "at",
            format!("({}, {}) m", fmt1(loc.x), fmt1(loc.y)),
            None,
        ),
        attr("location", "is", spatial_relation(loc.x, loc.y), None),
        attr(
            "orientation",
            "heads",
            orientation_phrase(p.orientation),
            Some(p.orientation),
        ),
        attr(
            "size",
            "has",
            format!(
                "{} x {} x {} m",
                fmt1(p.size.length),
                fmt1(p.size.width),
                fmt1(p.size.height)
            ),
            None,
        ),
        attr("status", "is", p.status.clone(), None),
    ];
    if !p.history.is_empty() {
        let trail = p
            .history
            .iter()
            .map(|h| format!("({}, {})", fmt1(h.x), fmt1(h.y)))
            .collect::<Vec<_>>()
            .join(" ");
        attrs.push(attr("history", "passed through", format!("{trail} m"), None));
    }
    attrs.sort_by_key(|a| a.name);
    attrs
}

/// Builds the ego-centred scene graph. Element order is weather, road,
/// facilities, participants; attribute nodes follow their element in
/// lexicographic name order.
pub fn build_scene_graph(e: &SceneElementSet) -> SceneGraph {
    let mut g = SceneGraph::default();
    g.nodes.push(Node {
        id: 0,
        kind: NodeKind::Ego,
        label: "ego".into(),
        value: None,
        raw: None,
    });

    let add_element = |g: &mut SceneGraph, element: ElementRef, relation: &str, mut attrs: Vec<Attr>| {
        attrs.sort_by_key(|a| a.name);
        let el_id = g.nodes.len();
        g.nodes.push(Node {
            id: el_id,
            kind: NodeKind::Element,
            label: element.to_string(),
            value: None,
            raw: None,
        });
        g.edges.push(Edge {
            from: 0,
            to: el_id,
            relation: relation.to_string(),
        });
        for a in attrs {
            let id = g.nodes.len();
            g.nodes.push(Node {
                id,
                kind: NodeKind::Attribute,
                label: a.name.to_string(),
                value: Some(a.value),
                raw: a.raw,
            });
            g.edges.push(Edge {
                from: el_id,
                to: id,
                relation: a.relation,
            });
        }
    };

    if let Some(w) = &e.weather {
        add_element(
            &mut g,
            ElementRef::Weather,
            "drives in",
            vec![
                attr("level", "has", w.level.clone(), None),
                attr("time", "has", w.time.clone(), None),
                attr("type", "has", w.kind.clone(), None),
            ],
        );
    }
    if let Some(r) = &e.road {
        add_element(
            &mut g,
            ElementRef::Road,
            "drives on",
            vec![
                attr("direction", "has", r.direction.clone(), None),
                attr("function", "has", r.function.clone(), None),
                attr("structure", "has", r.structure.clone(), None),
                attr("type", "has", r.kind.clone(), None),
            ],
        );
    }
    for (i, f) in e.facilities.iter().enumerate() {
        add_element(
            &mut g,
            ElementRef::Facility(i),
            "observes",
            vec![
                attr("direction", "has", f.direction.clone(), None),
                attr("kind", "has", f.kind.as_str(), None),
                attr("type", "has", f.facility_type.clone(), None),
            ],
        );
    }
    for (i, p) in e.participants.iter().enumerate() {
        add_element(
            &mut g,
            ElementRef::Participant(i),
            spatial_relation(p.location.x, p.location.y),
            participant_attributes(p),
        );
    }
    g
}

/// Reads `[element-relation-attribute]` triplets back out of a scene graph.
pub fn extract_triplets(g: &SceneGraph) -> Result<Vec<Triplet>> {
    let egos: Vec<&Node> = g.nodes.iter().filter(|n| n.kind == NodeKind::Ego).collect();
    if egos.len() != 1 {
        return Err(Error::Structure(format!(
            "expected exactly one ego node, found {}",
            egos.len()
        )));
    }
    let ego = egos[0].id;
    let node = |id: usize| {
        g.nodes
            .iter()
            .find(|n| n.id == id)
            .ok_or_else(|| Error::Structure(format!("edge references missing node {id}")))
    };
    for e in &g.edges {
        node(e.from)?;
        node(e.to)?;
        if e.relation.trim().is_empty() {
            return Err(Error::Structure(format!("empty relation on edge {}->{}", e.from, e.to)));
        }
    }

    let mut elements: Vec<(ElementRef, usize)> = Vec::new();
    for e in g.edges.iter().filter(|e| e.from == ego) {
        let n = node(e.to)?;
        if n.kind != NodeKind::Element {
            return Err(Error::Structure(format!("ego links directly to non-element node {}", n.id)));
        }
        elements.push((n.label.parse()?, n.id));
    }
    elements.sort();

    let mut triplets = Vec::new();
    let mut seen_attr = BTreeSet::new();
    for (element, el_id) in &elements {
        let mut attrs = Vec::new();
        for e in g.edges.iter().filter(|e| e.from == *el_id) {
            let n = node(e.to)?;
            if n.kind != NodeKind::Attribute {
                return Err(Error::Structure(format!("element {element} links to non-attribute node {}", n.id)));
            }
            if !seen_attr.insert(n.id) {
                return Err(Error::Structure(format!("attribute node {} has several parents", n.id)));
            }
            let value = n
                .value
                .clone()
                .ok_or_else(|| Error::Structure(format!("attribute node {} has no value", n.id)))?;
            attrs.push(Triplet {
                element: *element,
                relation: e.relation.clone(),
                attribute: AttributeValue {
                    name: n.label.clone(),
                    value,
                    raw: n.raw,
                },
            });
        }
        attrs.sort_by(|a, b| a.attribute.name.cmp(&b.attribute.name));
        for w in attrs.windows(2) {
            if w[0].attribute.name == w[1].attribute.name && w[0].relation == w[1].relation {
                return Err(Error::Structure(format!(
                    "duplicate triplet {element}-{}-{}",
                    w[0].relation, w[0].attribute.name
                )));
            }
        }
        triplets.extend(attrs);
    }

    if let Some(orphan) = g
        .nodes
        .iter()
        .find(|n| n.kind == NodeKind::Attribute && !seen_attr.contains(&n.id))
    {
        return Err(Error::Structure(format!(
            "attribute node {} ('{}') is unreachable from ego",
            orphan.id, orphan.label
        )));
    }
    Ok(triplets)
}
