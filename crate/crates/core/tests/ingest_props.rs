use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use lifelog_core::ingest::{parse_event_file, partition_by_day, write_event_file, LifelogEvent, SensorKind};
use proptest::prelude::*;

fn origin() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2013, 12, 30).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn events_strategy() -> impl Strategy<Value = Vec<LifelogEvent>> {
    prop::collection::vec((0usize..7, 0i64..3 * 1440, prop::option::of(0i64..2 * 1440), 0usize..3), 1..20).prop_map(
        |raw| {
            raw.into_iter()
                .enumerate()
                .map(|(i, (s, start, dur, user))| LifelogEvent {
                    user_id: format!("{}", user + 1),
                    sensor: SensorKind::ALL[s],
                    entity_key: format!("ev{i}"),
                    start: origin() + Duration::minutes(start),
                    end: dur.map(|d| origin() + Duration::minutes(start + d)),
                    attrs: BTreeMap::new(),
                })
                .collect()
        },
    )
}

proptest! {
    #[test]
    fn clipping_covers_every_minute_exactly_once(events in events_strategy()) {
        let buckets = partition_by_day(events.clone());
        for b in &buckets {
            prop_assert!(b.events.windows(2).all(|w| w[0].start <= w[1].start));
            let lo = b.date.and_hms_opt(0, 0, 0).unwrap();
            let hi = lo + Duration::days(1);
            for e in &b.events {
                prop_assert_eq!(&e.user_id, &b.user_id);
                prop_assert!(e.start >= lo && e.start < hi);
                if let Some(end) = e.end {
                    prop_assert!(end >= e.start && end <= hi);
                }
            }
        }
        for ev in &events {
            let pieces: Vec<(NaiveDate, &LifelogEvent)> = buckets
                .iter()
                .flat_map(|b| b.events.iter().map(move |e| (b.date, e)))
                .filter(|(_, e)| e.entity_key == ev.entity_key)
                .collect();
            match ev.end {
                None => {
                    prop_assert_eq!(pieces.len(), 1);
                    prop_assert_eq!(pieces[0].0, ev.start.date());
                }
                Some(end) => {
                    // Brute force over the minute grid.
                    let mut t = ev.start;
                    while t < end {
                        let holders: Vec<NaiveDate> = pieces
                            .iter()
                            .filter(|(_, p)| p.start <= t && t < p.end.unwrap())
                            .map(|(d, _)| *d)
                            .collect();
                        prop_assert_eq!(holders.len(), 1, "minute {} covered {} times", t, holders.len());
                        prop_assert_eq!(holders[0], t.date());
                        t += Duration::minutes(1);
                    }
                    let expected_days = if end == ev.start {
                        1
                    } else {
                        ((end - Duration::minutes(1)).date() - ev.start.date()).num_days() + 1
                    };
                    prop_assert_eq!(pieces.len() as i64, expected_days);
                }
            }
        }
    }

    #[test]
    fn event_file_roundtrip(events in events_strategy(), key in "[a-z\\t\\n\\\\ ]{1,8}") {
        let mut events = events;
        events[0].entity_key = key;
        let mut buf = Vec::new();
        write_event_file(&mut buf, &["seed=1".to_string()], &events).unwrap();
        let text = String::from_utf8(buf).unwrap();
        prop_assert!(text.starts_with("# seed=1\n"));
        prop_assert_eq!(parse_event_file(&text).unwrap(), events);
    }
}

#[test]
fn midnight_crossing_event_is_split() {
    let ev = LifelogEvent {
        user_id: "1".into(),
        sensor: SensorKind::Call,
        entity_key: "x".into(),
        start: origin() + Duration::minutes(23 * 60 + 50),
        end: Some(origin() + Duration::minutes(24 * 60 + 20)),
        attrs: BTreeMap::new(),
    };
    let buckets = partition_by_day([ev]);
    assert_eq!(buckets.len(), 2);
    assert_eq!(buckets[0].events[0].end, Some(origin() + Duration::days(1)));
    assert_eq!(buckets[1].events[0].start, origin() + Duration::days(1));
    assert_eq!(buckets[1].events[0].end, Some(origin() + Duration::minutes(24 * 60 + 20)));
}
