//! Articulatory features, the phoneme/phone inventory, and the per-feature
//! distributions used when the channel writes a phone.
//!
//! Features are generated one at a time in chart order. Whether a feature
//! is defined depends only on the values of features earlier in that order,
//! so the product of per-feature probabilities over the defined features of
//! a bundle is a proper distribution over feature bundles. Bundles outside
//! the inventory cannot be emitted, so phone probabilities are renormalized
//! over the inventory.

use std::fmt;

use crate::error::{Error, Result};

/// Articulatory features in generation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Consonantal,
    Continuant,
    Sonority,
    Articulator,
    Anterior,
    Distributed,
    Nasality,
    Voicing,
    Reduced,
    High,
    Back,
    Low,
    Round,
    Atr,
}

pub const FEATURE_COUNT: usize = 14;

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [
        Feature::Consonantal,
        Feature::Continuant,
        Feature::Sonority,
        Feature::Articulator,
        Feature::Anterior,
        Feature::Distributed,
        Feature::Nasality,
        Feature::Voicing,
        Feature::Reduced,
        Feature::High,
        Feature::Back,
        Feature::Low,
        Feature::Round,
        Feature::Atr,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        FEATURE_SPECS[self.index()].name
    }

    pub fn values(self) -> &'static [&'static str] {
        FEATURE_SPECS[self.index()].values
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Whether this feature is defined given the values of the features
    /// that precede it.
    pub fn applies(self, b: &PhonemeBundle) -> bool {
        use Feature::*;
        let is = |f: Feature, v: &str| b.get(f) == Some(value_index(f, v));
        match self {
            Consonantal => true,
            Continuant => is(Consonantal, "C"),
            Sonority => is(Consonantal, "C") && is(Continuant, "sonorant"),
            Articulator => {
                is(Consonantal, "C") && !is(Sonority, "lateral") && !is(Sonority, "rhotic")
            }
            Anterior | Distributed => is(Articulator, "cor"),
            Nasality => is(Continuant, "stop"),
            Voicing => {
                (is(Consonantal, "C") && !is(Continuant, "sonorant") && !is(Nasality, "+n"))
                    || is(Consonantal, "laryngeal")
            }
            Reduced | High => is(Consonantal, "V"),
            Back | Low | Round => is(Consonantal, "V") && is(Reduced, "full"),
            Atr => {
                is(Consonantal, "V")
                    && is(Reduced, "full")
                    && (is(High, "+h") || (is(Back, "-b") && is(Low, "-l")))
            }
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of the feature chart.
#[derive(Debug, Clone, Copy)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub values: &'static [&'static str],
    /// Noise weight.
    pub mu: f64,
    /// Whether the feature assimilates to its neighbours.
    pub assimilates: bool,
}

pub const FEATURE_SPECS: [FeatureSpec; FEATURE_COUNT] = [
    FeatureSpec { name: "consonantal", values: &["silence", "C", "V", "laryngeal"], mu: 0.0, assimilates: false },
    FeatureSpec { name: "continuant", values: &["stop", "fric", "sonorant"], mu: 0.01, assimilates: true },
    FeatureSpec { name: "sonority", values: &["lateral", "rhotic", "glide"], mu: 0.0, assimilates: false },
    FeatureSpec { name: "articulator", values: &["lab", "cor", "dors"], mu: 0.0, assimilates: true },
    FeatureSpec { name: "anterior", values: &["+a", "-a"], mu: 0.02, assimilates: true },
    FeatureSpec { name: "distributed", values: &["+d", "-d"], mu: 0.02, assimilates: true },
    FeatureSpec { name: "nasality", values: &["+n", "-n"], mu: 0.01, assimilates: true },
    FeatureSpec { name: "voicing", values: &["+v", "-v"], mu: 0.01, assimilates: true },
    FeatureSpec { name: "reduced", values: &["reduced", "full"], mu: 0.15, assimilates: false },
    FeatureSpec { name: "high", values: &["+h", "-h"], mu: 0.01, assimilates: false },
    FeatureSpec { name: "back", values: &["+b", "-b"], mu: 0.01, assimilates: false },
    FeatureSpec { name: "low", values: &["+l", "-l"], mu: 0.01, assimilates: false },
    FeatureSpec { name: "round", values: &["+r", "-r"], mu: 0.01, assimilates: false },
    FeatureSpec { name: "ATR", values: &["+ATR", "-ATR"], mu: 0.01, assimilates: false },
];

fn value_index(f: Feature, v: &str) -> u8 {
    f.values()
        .iter()
        .position(|x| *x == v)
        .unwrap_or_else(|| panic!("{v} is not a value of {f}")) as u8
}

/// Feature-value assignment for one phoneme or phone; `None` where the
/// feature is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhonemeBundle {
    values: [Option<u8>; FEATURE_COUNT],
}

impl PhonemeBundle {
    pub fn get(&self, f: Feature) -> Option<u8> {
        self.values[f.index()]
    }

    pub fn value_name(&self, f: Feature) -> Option<&'static str> {
        self.get(f).map(|v| f.values()[v as usize])
    }

    /// Parses a comma-separated chart entry such as `C,stop,lab,-n,-v`.
    /// Each value name is unique across features except where a feature
    /// is implied by position; names are resolved in chart order.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut b = PhonemeBundle::default();
        for raw in spec.split(',') {
            let v = raw.trim();
            let feature = Feature::ALL
                .into_iter()
                .find(|f| b.get(*f).is_none() && f.values().contains(&v))
                .ok_or_else(|| Error::InvalidParameter(format!("unknown feature value '{v}'")))?;
            b.values[feature.index()] = Some(value_index(feature, v));
        }
        for f in Feature::ALL {
            let defined = b.get(f).is_some();
            if defined != f.applies(&b) {
                return Err(Error::InvalidParameter(format!(
                    "bundle '{spec}': feature {f} is {} but should {}be",
                    if defined { "set" } else { "missing" },
                    if defined { "not " } else { "" }
                )));
            }
        }
        Ok(b)
    }
}

impl fmt::Display for PhonemeBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = Feature::ALL.iter().filter_map(|&x| self.value_name(x)).collect();
        f.write_str(&names.join(","))
    }
}

/// Dense phone index into an [`Inventory`].
pub type PhoneId = usize;

#[derive(Debug, Clone)]
pub struct Phone {
    pub mnemonic: &'static str,
    pub ipa: &'static str,
    pub example: &'static str,
    pub bundle: PhonemeBundle,
}

/// Mnemonic, IPA, example word, features. Glides carry an explicit
/// `glide` sonority value, which the chart leaves implicit.
const CHART: &[(&str, &str, &str, &str)] = &[
    ("b", "b", "bee", "C,stop,lab,-n,-v"),
    ("p", "p", "pea", "C,stop,lab,-n,+v"),
    ("d", "d", "day", "C,stop,cor,-n,-v,+a,-d"),
    ("t", "t", "tea", "C,stop,cor,-n,+v,+a,-d"),
    ("g", "g", "gay", "C,stop,dors,-n,-v"),
    ("k", "k", "key", "C,stop,dors,-n,+v"),
    ("jh", "ǰ", "joke", "C,fric,cor,-v,-a,-d"),
    ("ch", "č", "choke", "C,fric,cor,+v,-a,-d"),
    ("s", "s", "sea", "C,fric,cor,-v,+a,-d"),
    ("sh", "š", "she", "C,fric,cor,-v,-a,+d"),
    ("z", "z", "zone", "C,fric,cor,+v,+a,-d"),
    ("zh", "ž", "azure", "C,fric,cor,+v,-a,+d"),
    ("f", "f", "fin", "C,fric,lab,-v"),
    ("v", "v", "van", "C,fric,lab,+v"),
    ("th", "θ", "thin", "C,fric,cor,-v,+a,+d"),
    ("dh", "ð", "then", "C,fric,cor,+v,+a,+d"),
    ("m", "m", "mom", "C,stop,lab,+n"),
    ("n", "n", "noon", "C,stop,cor,+n,+a,-d"),
    ("ng", "ŋ", "sing", "C,stop,dors,+n"),
    ("l", "l", "lay", "C,sonorant,lateral"),
    ("r", "r", "ray", "C,sonorant,rhotic"),
    ("w", "w", "way", "C,sonorant,glide,lab"),
    ("y", "y", "yacht", "C,sonorant,glide,cor,+a,-d"),
    ("hh", "h", "hay", "laryngeal,-v"),
    ("hv", "ɦ", "ahead", "laryngeal,+v"),
    ("ih", "ɪ", "bit", "V,full,+h,-l,-b,-r,-ATR"),
    ("iy", "i", "beet", "V,full,+h,-l,-b,-r,+ATR"),
    ("uh", "ʊ", "book", "V,full,+h,-l,+b,+r,-ATR"),
    ("u", "u", "boot", "V,full,+h,-l,+b,+r,+ATR"),
    ("eh", "ɛ", "bet", "V,full,-h,-l,-b,-r,-ATR"),
    ("ey", "e", "base", "V,full,-h,-l,-b,-r,+ATR"),
    ("ah", "ʌ", "but", "V,full,-h,-l,+b,-r"),
    ("ow", "o", "bone", "V,full,-h,-l,+b,+r"),
    ("ae", "æ", "bat", "V,full,-h,+l,-b,-r"),
    ("aa", "a", "bob", "V,full,-h,+l,+b,-r"),
    ("ao", "ɔ", "bought", "V,full,-h,+l,+b,+r"),
    ("ix", "ɨ", "roses", "V,reduced,+h"),
    ("ax", "ə", "about", "V,reduced,-h"),
    ("sil", "ʔ", "(silence)", "silence"),
];

/// A set of phones with their feature bundles.
#[derive(Debug, Clone)]
pub struct Inventory {
    phones: Vec<Phone>,
}

impl Inventory {
    /// The full built-in chart.
    pub fn standard() -> Self {
        let phones = CHART
            .iter()
            .map(|&(mnemonic, ipa, example, spec)| Phone {
                mnemonic,
                ipa,
                example,
                bundle: PhonemeBundle::parse(spec).expect("built-in chart is well formed"),
            })
            .collect();
        Inventory { phones }
    }

    /// A sub-inventory with the given mnemonics, in the given order.
    pub fn subset(mnemonics: &[&str]) -> Result<Self> {
        let full = Inventory::standard();
        let phones = mnemonics
            .iter()
            .map(|m| {
                full.lookup(m)
                    .map(|id| full.phones[id].clone())
                    .ok_or_else(|| Error::UnknownPhoneme {
                        token: m.to_string(),
                        line: 0,
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Inventory { phones })
    }

    pub fn phones(&self) -> &[Phone] {
        &self.phones
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn bundle(&self, id: PhoneId) -> &PhonemeBundle {
        &self.phones[id].bundle
    }

    pub fn lookup(&self, mnemonic: &str) -> Option<PhoneId> {
        self.phones.iter().position(|p| p.mnemonic == mnemonic)
    }

    /// Audit dump of the chart, one phone per line.
    pub fn dump(&self) -> String {
        let mut out = String::from("symbol\tipa\texample\tfeatures\n");
        for p in &self.phones {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", p.mnemonic, p.ipa, p.example, p.bundle));
        }
        out.push_str("\nfeature\tvalues\tmu\talpha\n");
        for s in FEATURE_SPECS {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                s.name,
                s.values.join(","),
                s.mu,
                u8::from(s.assimilates)
            ));
        }
        out
    }
}

/// Transducer constants and feature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub c_insert: f64,
    pub c_map: f64,
    pub c_delete: f64,
    pub beta_u: f64,
    pub beta_q: f64,
    pub beta_n: f64,
    /// Per-feature noise weights, indexed by [`Feature::index`].
    pub mu: [f64; FEATURE_COUNT],
    /// Compare the anticipatory term against the previous phone instead
    /// of the next phoneme.
    pub strict_appendix_a: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        let mut mu = [0.0; FEATURE_COUNT];
        for (m, s) in mu.iter_mut().zip(FEATURE_SPECS.iter()) {
            *m = s.mu;
        }
        ChannelParams {
            c_insert: 0.05,
            c_map: 0.05,
            c_delete: 0.9,
            beta_u: 1.0,
            beta_q: 0.15,
            beta_n: 0.15,
            mu,
            strict_appendix_a: false,
        }
    }
}

impl ChannelParams {
    /// Parameters under which every phoneme surfaces unchanged.
    pub fn noiseless() -> Self {
        ChannelParams {
            c_insert: 0.0,
            c_map: 0.0,
            c_delete: 0.0,
            beta_u: 1.0,
            beta_q: 0.0,
            beta_n: 0.0,
            mu: [0.0; FEATURE_COUNT],
            strict_appendix_a: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64, max_exclusive: bool| {
            let ok = v >= 0.0 && if max_exclusive { v < 1.0 } else { v <= 1.0 };
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} = {v} must be in [0, 1{}",
                    if max_exclusive { ")" } else { "]" }
                )))
            }
        };
        unit("c_I", self.c_insert, true)?;
        unit("c_M", self.c_map, true)?;
        unit("c_D", self.c_delete, false)?;
        for (name, v) in [("beta_u", self.beta_u), ("beta_q", self.beta_q), ("beta_n", self.beta_n)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be non-negative")));
            }
        }
        if let Some(m) = self.mu.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidParameter(format!("mu = {m} must be non-negative")));
        }
        Ok(())
    }

    /// Applies one `key = value` override (`c_I`, `c_M`, `c_D`, `beta_u`,
    /// `beta_q`, `beta_n`, `mu.<feature>`, `strict_appendix_a`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("{key}: '{value}' is not a number")))
        };
        match key {
            "c_I" => self.c_insert = num()?,
            "c_M" => self.c_map = num()?,
            "c_D" => self.c_delete = num()?,
            "beta_u" => self.beta_u = num()?,
            "beta_q" => self.beta_q = num()?,
            "beta_n" => self.beta_n = num()?,
            "strict_appendix_a" => {
                self.strict_appendix_a = value
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("{key}: '{value}' is not a bool")))?
            }
            k => match k.strip_prefix("mu.").and_then(Feature::from_name) {
                Some(f) => self.mu[f.index()] = num()?,
                None => return Ok(false),
            },
        }
        Ok(true)
    }
}

/// Per-feature value distribution. `u`, `q` and `n` are the feature values
/// of the underlying phoneme, previous phone and next phoneme (`None` when
/// undefined or at an edge). Falls back to uniform when every weight is 0.
pub fn feature_distribution(
    params: &ChannelParams,
    f: Feature,
    u: Option<u8>,
    q: Option<u8>,
    n: Option<u8>,
) -> Vec<f64> {
    let spec = &FEATURE_SPECS[f.index()];
    let alpha = if spec.assimilates { 1.0 } else { 0.0 };
    let mu = params.mu[f.index()];
    // The literal formula compares the anticipatory term against q.
    let n_ref = if params.strict_appendix_a { q } else { n };
    let k = spec.values.len();
    let mut w: Vec<f64> = (0..k as u8)
        .map(|v| {
            let d = |x: Option<u8>| if x == Some(v) { 1.0 } else { 0.0 };
            mu + params.beta_u * d(u) + alpha * params.beta_q * d(q) + alpha * params.beta_n * d(n_ref)
        })
        .collect();
    let z: f64 = w.iter().sum();
    if z > 0.0 {
        w.iter_mut().for_each(|x| *x /= z);
    } else {
        w.iter_mut().for_each(|x| *x = 1.0 / k as f64);
    }
    w
}

/// Phone-generation distributions over one inventory.
///
/// Context arguments `q` and `n` are `Option<PhoneId>`; `None` is the edge
/// sentinel, whose δ terms contribute nothing.
#[derive(Debug, Clone)]
pub struct Phonology {
    inventory: Inventory,
    params: ChannelParams,
}

impl Phonology {
    pub fn new(inventory: Inventory, params: ChannelParams) -> Result<Self> {
        params.validate()?;
        Ok(Phonology { inventory, params })
    }

    pub fn standard() -> Self {
        Phonology::new(Inventory::standard(), ChannelParams::default()).expect("defaults are valid")
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inventory
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    fn value(&self, id: Option<PhoneId>, f: Feature) -> Option<u8> {
        id.and_then(|i| self.inventory.bundle(i).get(f))
    }

    /// Product over the defined features of `s` of the per-feature
    /// probability, before renormalizing over the inventory.
    fn raw(&self, s: PhoneId, dist: impl Fn(Feature) -> Vec<f64>) -> f64 {
        let b = self.inventory.bundle(s);
        Feature::ALL
            .into_iter()
            .filter_map(|f| b.get(f).map(|v| dist(f)[v as usize]))
            .product()
    }

    pub fn raw_insert(&self, s: PhoneId) -> f64 {
        self.raw(s, |f| vec![1.0 / f.values().len() as f64; f.values().len()])
    }

    pub fn raw_map(&self, s: PhoneId, q: Option<PhoneId>, u: PhoneId) -> f64 {
        self.raw(s, |f| {
            feature_distribution(&self.params, f, self.value(Some(u), f), self.value(q, f), None)
        })
    }

    pub fn raw_copy(&self, s: PhoneId, q: Option<PhoneId>, u: PhoneId, n: Option<PhoneId>) -> f64 {
        self.raw(s, |f| {
            feature_distribution(
                &self.params,
                f,
                self.value(Some(u), f),
                self.value(q, f),
                self.value(n, f),
            )
        })
    }

    fn normalized(&self, raw: impl Fn(PhoneId) -> f64) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.inventory.len()).map(raw).collect();
        let z: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= z);
        v
    }

    /// Insertion distribution over the inventory.
    pub fn insert_distribution(&self) -> Vec<f64> {
        self.normalized(|s| self.raw_insert(s))
    }

    pub fn map_distribution(&self, q: Option<PhoneId>, u: PhoneId) -> Vec<f64> {
        self.normalized(|s| self.raw_map(s, q, u))
    }

    pub fn copy_distribution(&self, q: Option<PhoneId>, u: PhoneId, n: Option<PhoneId>) -> Vec<f64> {
        self.normalized(|s| self.raw_copy(s, q, u, n))
    }

    pub fn p_insert(&self, s: PhoneId) -> f64 {
        self.insert_distribution()[s]
    }

    pub fn p_map(&self, s: PhoneId, q: Option<PhoneId>, u: PhoneId) -> f64 {
        self.map_distribution(q, u)[s]
    }

    pub fn p_copy(&self, s: PhoneId, q: Option<PhoneId>, u: PhoneId, n: Option<PhoneId>) -> f64 {
        self.copy_distribution(q, u, n)[s]
    }
}

/// Precomputed phone distributions for every context. Context indices run
/// over `0..=len`, where `len` is the sentinel.
#[derive(Debug, Clone)]
pub struct PhoneTables {
    phones: usize,
    insert: Vec<f64>,
    map: Vec<f64>,
    copy: Vec<f64>,
}

impl PhoneTables {
    pub fn new(ph: &Phonology) -> Self {
        let p = ph.inventory().len();
        let ctx = p + 1;
        let opt = |i: usize| if i == p { None } else { Some(i) };
        let insert = ph.insert_distribution();

        // Per-feature distributions are shared across all phones s, so
        // compute them once per context and take products per bundle.
        let bundles: Vec<PhonemeBundle> = (0..p).map(|i| *ph.inventory().bundle(i)).collect();
        let value = |i: Option<usize>, f: Feature| i.and_then(|i| bundles[i].get(f));
        let product = |dists: &[Vec<f64>], out: &mut [f64]| {
            for (s, b) in bundles.iter().enumerate() {
                out[s] = Feature::ALL
                    .into_iter()
                    .filter_map(|f| b.get(f).map(|v| dists[f.index()][v as usize]))
                    .product();
            }
            let z: f64 = out.iter().sum();
            out.iter_mut().for_each(|x| *x /= z);
        };

        let mut map = vec![0.0; ctx * p * p];
        for q in 0..ctx {
            for u in 0..p {
                let dists: Vec<Vec<f64>> = Feature::ALL
                    .into_iter()
                    .map(|f| feature_distribution(ph.params(), f, value(Some(u), f), value(opt(q), f), None))
                    .collect();
                let base = (q * p + u) * p;
                product(&dists, &mut map[base..base + p]);
            }
        }

        let mut copy = vec![0.0; ctx * p * ctx * p];
        copy.chunks_mut(p * ctx * p).enumerate().for_each(|(q, block)| {
            for u in 0..p {
                for n in 0..ctx {
                    let dists: Vec<Vec<f64>> = Feature::ALL
                        .into_iter()
                        .map(|f| {
                            feature_distribution(
                                ph.params(),
                                f,
                                value(Some(u), f),
                                value(opt(q), f),
                                value(opt(n), f),
                            )
                        })
                        .collect();
                    let base = (u * ctx + n) * p;
                    product(&dists, &mut block[base..base + p]);
                }
            }
        });
        PhoneTables {
            phones: p,
            insert,
            map,
            copy,
        }
    }

    pub fn phones(&self) -> usize {
        self.phones
    }

    /// Index of the edge sentinel in context positions.
    pub fn sentinel(&self) -> usize {
        self.phones
    }

    #[inline]
    pub fn insert(&self, s: usize) -> f64 {
        self.insert[s]
    }

    #[inline]
    pub fn map(&self, q: usize, u: usize, s: usize) -> f64 {
        self.map[(q * self.phones + u) * self.phones + s]
    }

    /// The copy distribution for one context, indexed by surface phone.
    #[inline]
    pub fn copy_row(&self, q: usize, u: usize, n: usize) -> &[f64] {
        let p = self.phones;
        let base = ((q * p + u) * (p + 1) + n) * p;
        &self.copy[base..base + p]
    }

    #[inline]
    pub fn copy(&self, q: usize, u: usize, n: usize, s: usize) -> f64 {
        self.copy_row(q, u, n)[s]
    }
}
