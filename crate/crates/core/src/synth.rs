//! Deterministic synthetic lifelogs built from behavioral archetypes.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{SLOTS_PER_DAY, SLOT_MINUTES};
use crate::ingest::{Gender, LifelogEvent, SensorKind, UserMeta};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("archetype '{name}': {reason}")]
    InvalidArchetype { name: String, reason: String },
    #[error("usage: {0}")]
    Usage(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    pub name: String,
    /// Weight per sensor; must sum to 1.
    pub sensor_mix: BTreeMap<SensorKind, f64>,
    /// `(slot, intensity)` pairs; events start only in listed slots.
    pub active_slots: Vec<(usize, f64)>,
    /// Distinct entities per sensor in each user's private pool.
    pub entity_pool_size: usize,
    pub events_per_day_mean: f64,
    pub events_per_day_spread: f64,
    pub gender: Gender,
}

fn slot_range(from: usize, to: usize, intensity: f64) -> impl Iterator<Item = (usize, f64)> {
    (from..to).map(move |s| (s, intensity))
}

impl ArchetypeSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |reason: &str| SynthError::InvalidArchetype {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        let total: f64 = self.sensor_mix.values().sum();
        if self.sensor_mix.values().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(bad("sensor weights must be non-negative and sum to 1"));
        }
        if self.active_slots.is_empty() {
            return Err(bad("no active slots"));
        }
        if self.active_slots.iter().any(|&(s, w)| s >= SLOTS_PER_DAY || !(w >= 0.0)) {
            return Err(bad("slots must be < 96 with non-negative intensity"));
        }
        if self.active_slots.iter().all(|&(_, w)| w == 0.0) {
            return Err(bad("all slot intensities are zero"));
        }
        if self.entity_pool_size == 0 {
            return Err(bad("entity pool must be non-empty"));
        }
        if !(self.events_per_day_mean >= 0.0 && self.events_per_day_spread >= 0.0) {
            return Err(bad("events per day must be non-negative"));
        }
        Ok(())
    }

    pub fn morning_caller() -> Self {
        Self {
            name: "morning caller".into(),
            sensor_mix: BTreeMap::from([
                (SensorKind::Call, 0.45),
                (SensorKind::Sms, 0.25),
                (SensorKind::WiFi, 0.1),
                (SensorKind::Location, 0.1),
                (SensorKind::ActivityState, 0.1),
            ]),
            active_slots: slot_range(24, 44, 1.0).collect(),
            entity_pool_size: 8,
            events_per_day_mean: 30.0,
            events_per_day_spread: 5.0,
            gender: Gender::F,
        }
    }

    pub fn night_app_user() -> Self {
        Self {
            name: "night app user".into(),
            sensor_mix: BTreeMap::from([
                (SensorKind::ApplicationUsage, 0.6),
                (SensorKind::WiFi, 0.2),
                (SensorKind::BluetoothProximity, 0.1),
                (SensorKind::Sms, 0.1),
            ]),
            active_slots: slot_range(80, 96, 1.0).chain(slot_range(0, 8, 0.5)).collect(),
            entity_pool_size: 10,
            events_per_day_mean: 35.0,
            events_per_day_spread: 6.0,
            gender: Gender::M,
        }
    }

    pub fn commuter() -> Self {
        Self {
            name: "commuter".into(),
            sensor_mix: BTreeMap::from([
                (SensorKind::Location, 0.4),
                (SensorKind::ActivityState, 0.3),
                (SensorKind::BluetoothProximity, 0.15),
                (SensorKind::WiFi, 0.15),
            ]),
            active_slots: slot_range(28, 36, 1.0).chain(slot_range(68, 76, 1.0)).collect(),
            entity_pool_size: 6,
            events_per_day_mean: 25.0,
            events_per_day_spread: 5.0,
            gender: Gender::M,
        }
    }
}

/// The default suite: morning caller, night app user, commuter.
pub fn default_archetypes() -> Vec<ArchetypeSpec> {
    vec![
        ArchetypeSpec::morning_caller(),
        ArchetypeSpec::night_app_user(),
        ArchetypeSpec::commuter(),
    ]
}

pub const DEFAULT_USERS_PER_ARCHETYPE: usize = 4;
pub const DEFAULT_DAYS: usize = 30;

pub fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2013, 11, 1).expect("valid date")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub users: Vec<UserMeta>,
    /// Ordered by user, then start time.
    pub events: Vec<LifelogEvent>,
    /// Archetype index per user, aligned with `users`.
    pub archetype_of: Vec<usize>,
}

impl SynthOutput {
    pub fn archetype(&self, user_id: &str) -> Option<usize> {
        self.users
            .iter()
            .position(|u| u.user_id == user_id)
            .map(|i| self.archetype_of[i])
    }
}

fn entity_key(sensor: SensorKind, user: usize, i: usize) -> String {
    match sensor {
        SensorKind::Call | SensorKind::Sms => format!("+1555{user:03}{i:04}"),
        SensorKind::ApplicationUsage => format!("app.u{user}.n{i}"),
        SensorKind::WiFi => format!("ssid-u{user}-{i}"),
        SensorKind::BluetoothProximity => format!("{:02x}:{:02x}:00:00:00:{:02x}", user % 256, user / 256, i % 256),
        SensorKind::Location => format!("{:.3},{:.3}", 37.0 + user as f64 * 0.01, 127.0 + i as f64 * 0.001),
        SensorKind::ActivityState => ["still", "walking", "in_vehicle", "on_bicycle", "running", "tilting"]
            [(user + i) % 6]
            .to_string(),
    }
}

/// Typical duration in minutes; `None` for instantaneous records.
fn duration_minutes(sensor: SensorKind, rng: &mut ChaCha8Rng) -> Option<i64> {
    match sensor {
        SensorKind::Call => Some(rng.gen_range(1..=10)),
        SensorKind::ApplicationUsage => Some(rng.gen_range(1..=20)),
        SensorKind::WiFi => Some(rng.gen_range(15..=90)),
        SensorKind::ActivityState => Some(rng.gen_range(5..=40)),
        SensorKind::Sms | SensorKind::Location | SensorKind::BluetoothProximity => None,
    }
}

/// Generates `users_per_archetype` users per archetype over `days` consecutive
/// days from [`default_start_date`]. User ids are `1..=n` in archetype order.
pub fn generate_synthetic(
    archetypes: &[ArchetypeSpec],
    users_per_archetype: usize,
    days: usize,
    seed: u64,
) -> Result<SynthOutput, SynthError> {
    if archetypes.is_empty() {
        return Err(SynthError::Usage("at least one archetype is required".into()));
    }
    if days == 0 {
        return Err(SynthError::Usage("days must be at least 1".into()));
    }
    for a in archetypes {
        a.validate()?;
    }
    let start = default_start_date();
    let mut out = SynthOutput {
        users: Vec::new(),
        events: Vec::new(),
        archetype_of: Vec::new(),
    };
    let mut user_no = 0usize;
    for (ai, arch) in archetypes.iter().enumerate() {
        let sensors: Vec<SensorKind> = arch.sensor_mix.keys().copied().collect();
        let sensor_dist = WeightedIndex::new(arch.sensor_mix.values()).expect("validated weights");
        let slot_dist = WeightedIndex::new(arch.active_slots.iter().map(|&(_, w)| w)).expect("validated slots");
        let count_dist = Normal::new(arch.events_per_day_mean, arch.events_per_day_spread).expect("finite spread");
        // Skewed entity popularity so each user has recognizable favorites.
        let entity_dist =
            WeightedIndex::new((0..arch.entity_pool_size).map(|i| 1.0 / (i + 1) as f64)).expect("non-empty pool");

        for _ in 0..users_per_archetype {
            user_no += 1;
            let user_id = user_no.to_string();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(user_no as u64);
            let mut user_events = Vec::new();
            for day in 0..days {
                let date = start + Duration::days(day as i64);
                let day_end = date.and_time(NaiveTime::from_hms_opt(23, 59, 59).expect("valid time"));
                let count = count_dist.sample(&mut rng).round().max(0.0) as usize;
                let mut day_events = Vec::with_capacity(count);
                for _ in 0..count {
                    let sensor = sensors[sensor_dist.sample(&mut rng)];
                    let slot = arch.active_slots[slot_dist.sample(&mut rng)].0;
                    let minute = slot * SLOT_MINUTES as usize + rng.gen_range(0..SLOT_MINUTES as usize);
                    let second = rng.gen_range(0..60u32);
                    let t: NaiveDateTime = date.and_hms_opt((minute / 60) as u32, (minute % 60) as u32, second)
                        .expect("minute within day");
                    let end = duration_minutes(sensor, &mut rng).map(|m| (t + Duration::minutes(m)).min(day_end));
                    let entity = entity_dist.sample(&mut rng);
                    day_events.push(LifelogEvent {
                        user_id: user_id.clone(),
                        sensor,
                        entity_key: entity_key(sensor, user_no, entity),
                        start: t,
                        end,
                        attrs: BTreeMap::new(),
                    });
                }
                day_events.sort_by_key(|e| e.start);
                user_events.extend(day_events);
            }
            out.users.push(UserMeta {
                user_id,
                gender: arch.gender,
                day_count: days,
            });
            out.archetype_of.push(ai);
            out.events.extend(user_events);
        }
    }
    Ok(out)
}
