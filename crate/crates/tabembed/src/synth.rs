//! Deterministic synthetic datasets shaped like two well-known Kaggle
//! tables: Titanic passenger survival (classification) and Rossmann store
//! sales (regression).
//!
//! The generators exist so the pipeline, demos and large-scale tests can run
//! on realistic data with known signal structure without shipping external
//! files. Column names, value ranges and marginal distributions mimic the
//! originals; targets are drawn from planted dependencies on the feature
//! columns plus noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Titanic-like CSV: 891 rows with the Kaggle column layout. Survival is a
/// logistic draw dominated by Sex and Pclass with age, fare and family-size
/// effects, so embedding-based neighbors carry real signal.
pub fn titanic_csv(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from(
        "PassengerId,Survived,Pclass,Name,Sex,Age,SibSp,Parch,Ticket,Fare,Cabin,Embarked\n",
    );
    for id in 1..=891u32 {
        let class_draw: f64 = rng.gen();
        let pclass = if class_draw < 0.242 {
            1
        } else if class_draw < 0.449 {
            2
        } else {
            3
        };
        let female_rate = match pclass {
            1 => 0.44,
            2 => 0.41,
            _ => 0.30,
        };
        let female = rng.gen_bool(female_rate);
        let sex = if female { "female" } else { "male" };

        let (age_mean, age_sd) = match pclass {
            1 => (38.0, 14.0),
            2 => (30.0, 13.0),
            _ => (25.0, 11.0),
        };
        let age = if rng.gen_bool(0.20) {
            None
        } else {
            let raw = age_mean + age_sd * standard_normal(&mut rng);
            Some((raw.clamp(0.5, 80.0) * 2.0).round() / 2.0)
        };

        let sibsp = weighted_choice(
            &mut rng,
            &[(0, 0.68), (1, 0.23), (2, 0.03), (3, 0.02), (4, 0.02), (5, 0.01), (8, 0.01)],
        );
        let parch = weighted_choice(
            &mut rng,
            &[(0, 0.76), (1, 0.13), (2, 0.09), (3, 0.01), (4, 0.005), (5, 0.005)],
        );

        let (fare_log_mean, fare_log_sd) = match pclass {
            1 => (60.0f64.ln(), 0.7),
            2 => (20.0f64.ln(), 0.45),
            _ => (10.0f64.ln(), 0.5),
        };
        let fare = (fare_log_mean + fare_log_sd * standard_normal(&mut rng)).exp();
        let fare = (fare * 10000.0).round() / 10000.0;

        let embarked = if rng.gen_bool(0.002) {
            ""
        } else {
            let draw: f64 = rng.gen();
            if draw < 0.72 {
                "S"
            } else if draw < 0.91 {
                "C"
            } else {
                "Q"
            }
        };

        let cabin = if rng.gen_bool(0.23) {
            format!("C{}", rng.gen_range(1..150))
        } else {
            String::new()
        };

        let age_effect = age.map_or(0.0, |a| -0.022 * (a - 29.0));
        let fare_effect = 0.25 * ((fare.ln() - fare_log_mean) / fare_log_sd).clamp(-2.5, 2.5);
        let logit = -1.15
            + 2.6 * if female { 1.0 } else { 0.0 }
            + match pclass {
                1 => 1.25,
                2 => 0.55,
                _ => 0.0,
            }
            + age_effect
            + fare_effect
            - 0.35 * if sibsp >= 3 { 1.0 } else { 0.0 };
        let survived = rng.gen_bool(logistic(logit)) as u8;

        let age_text = age.map(|a| format!("{a}")).unwrap_or_default();
        out.push_str(&format!(
            "{id},{survived},{pclass},\"Passenger, No. {id}\",{sex},{age_text},{sibsp},{parch},T{ticket},{fare},{cabin},{embarked}\n",
            ticket = 100000 + 7 * id,
        ));
    }
    out
}

pub fn titanic_schema_toml() -> &'static str {
    r#"delimiter = ","
has_header = true

[[columns]]
name = "Pclass"
role = "categorical"

[[columns]]
name = "Sex"
role = "categorical"

[[columns]]
name = "Embarked"
role = "categorical"

[[columns]]
name = "Age"
role = "numeric"
bins = { quantile = 20 }

[[columns]]
name = "SibSp"
role = "numeric"
bins = "per_distinct_value"

[[columns]]
name = "Parch"
role = "numeric"
bins = "per_distinct_value"

[[columns]]
name = "Fare"
role = "numeric"
bins = { quantile = 20 }

[[columns]]
name = "Survived"
role = "target"
target_kind = "binary"

[[columns]]
name = "PassengerId"
role = "excluded"

[[columns]]
name = "Name"
role = "excluded"

[[columns]]
name = "Cabin"
role = "excluded"
"#
}

/// Rossmann-like CSV: `n_stores * n_days` chronologically ordered rows of
/// daily store sales. Sales are multiplicative in a per-store base level,
/// day-of-week factors, promotions, a smooth seasonal curve and noise;
/// closed stores have zero sales and are meant to be filtered on `Open=1`.
pub fn rossmann_csv(seed: u64, n_stores: usize, n_days: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store_base: Vec<f64> = (0..n_stores)
        .map(|_| (6000.0f64.ln() + 0.35 * standard_normal(&mut rng)).exp())
        .collect();

    let mut out = String::from(
        "Store,DayOfWeek,Date,Sales,Customers,Open,Promo,StateHoliday,SchoolHoliday\n",
    );
    let start = chrono::NaiveDate::from_ymd_opt(2014, 1, 6).expect("valid date");
    for day in 0..n_days {
        let date = start + chrono::Days::new(day as u64);
        let day_of_week = date.weekday().number_from_monday(); // 1..=7
        let day_of_year = chrono::Datelike::ordinal(&date) as f64;
        let week = day / 7;
        let promo_week = week % 2 == 0;
        let state_holiday = match day_of_year as u32 {
            50 | 51 => "a",
            110 => "b",
            170 => "c",
            _ => "0",
        };
        let school_holiday_rate = if (180.0..=225.0).contains(&day_of_year) {
            0.8
        } else {
            0.1
        };
        for (store_index, base) in store_base.iter().enumerate() {
            let store = store_index + 1;
            let school_holiday = rng.gen_bool(school_holiday_rate) as u8;
            let open_rate = if state_holiday != "0" {
                0.10
            } else if day_of_week == 7 {
                0.06
            } else {
                0.965
            };
            let open = rng.gen_bool(open_rate) as u8;
            let promo = (promo_week && day_of_week <= 5) as u8;

            let (sales, customers) = if open == 1 {
                let dow_factor = [1.05, 0.98, 0.95, 0.96, 1.02, 1.12, 0.55][day_of_week as usize - 1];
                let promo_factor = if promo == 1 { 1.28 } else { 1.0 };
                let season = 1.0 + 0.10 * (std::f64::consts::TAU * day_of_year / 365.0).sin();
                let school_factor = if school_holiday == 1 { 1.04 } else { 1.0 };
                let noise = (0.09 * standard_normal(&mut rng)).exp();
                let sales = base * dow_factor * promo_factor * season * school_factor * noise;
                let customers =
                    (sales / 6.5 * (0.08 * standard_normal(&mut rng)).exp()).round() as u64;
                (sales.round() as u64, customers)
            } else {
                (0, 0)
            };

            out.push_str(&format!(
                "{store},{day_of_week},{date},{sales},{customers},{open},{promo},{state_holiday},{school_holiday}\n",
                date = date.format("%Y-%m-%d"),
            ));
        }
    }
    out
}

pub fn rossmann_schema_toml() -> &'static str {
    r#"delimiter = ","
has_header = true

[[columns]]
name = "Store"
role = "categorical"

[[columns]]
name = "Promo"
role = "categorical"

[[columns]]
name = "StateHoliday"
role = "categorical"

[[columns]]
name = "SchoolHoliday"
role = "categorical"

[[columns]]
name = "DayOfWeek"
role = "numeric"
bins = "per_distinct_value"

[[columns]]
name = "Date"
role = "numeric"
bins = { quantile = 50 }
transform = { day_of_year = {} }

[[columns]]
name = "Sales"
role = "target"
target_kind = "continuous"

[[columns]]
name = "Customers"
role = "excluded"

[[columns]]
name = "Open"
role = "excluded"
"#
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Box-Muller standard normal draw.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn weighted_choice(rng: &mut ChaCha8Rng, table: &[(u32, f64)]) -> u32 {
    let total: f64 = table.iter().map(|&(_, w)| w).sum();
    let mut draw = rng.gen_range(0.0..total);
    for &(value, weight) in table {
        if draw < weight {
            return value;
        }
        draw -= weight;
    }
    table.last().expect("non-empty table").0
}
