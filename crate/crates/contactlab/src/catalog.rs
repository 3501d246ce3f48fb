//! Built-in example instances.
//!
//! Entries not pinned down by an external display are calibration
//! artifacts shipped with their validation suites, not ground truth:
//! `invariant_r5`, `cr_warped_r7`, `cr_product_r7` and `warp_surface_r5`
//! are accepted because the engine's own checks (classification, warp
//! detection, identity residuals) pass on them.

use crate::ambient::AmbientStructure;
use crate::error::{GeomError, Result};
use crate::immersion::Immersion;
use crate::semislant::SplitSpec;
use crate::warped::WarpSpec;

pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub ambient: AmbientStructure,
    pub immersion: Immersion,
    pub split: Option<SplitSpec>,
    pub warp: Option<WarpSpec>,
}

/// Stable catalog order.
pub const NAMES: [&str; 5] = [
    "example1",
    "invariant_r5",
    "cr_warped_r7",
    "cr_product_r7",
    "warp_surface_r5",
];

pub fn descriptions() -> Vec<(&'static str, &'static str)> {
    NAMES
        .iter()
        .map(|&n| (n, describe(n)))
        .collect()
}

fn describe(name: &str) -> &'static str {
    match name {
        "example1" => {
            "pointwise semi-slant surface in flat R^7: invariant plane plus a \
             slant plane with point-dependent angle, xi tangent"
        }
        "invariant_r5" => "invariant R^3 inside the standard structure on R^5",
        "cr_warped_r7" => {
            "contact CR warped product in the standard structure on R^7 with \
             warping f = sqrt(u^2+v^2)/2 (anti-invariant circle fiber)"
        }
        "cr_product_r7" => {
            "trivial (constant warping) contact CR product in the standard \
             structure on R^7"
        }
        "warp_surface_r5" => {
            "synthetic warped metric in flat R^5 with planted f(u) = e^u over \
             a spherical fiber; calibrates warp detection"
        }
        _ => "",
    }
}

/// Look up a catalog entry by name.
pub fn catalog(name: &str) -> Result<CatalogEntry> {
    match name {
        "example1" => example1(),
        "invariant_r5" => invariant_r5(),
        "cr_warped_r7" => cr_warped_r7(),
        "cr_product_r7" => cr_product_r7(),
        "warp_surface_r5" => warp_surface_r5(),
        _ => Err(GeomError::UnknownCatalogEntry { name: name.into() }),
    }
}

/// Surface χ(u,v,w,t,z) = (u+v, −u+v, t cos w, t sin w, w cos t, w sin t, z)
/// in the flat structure on R^7. The coordinate tangents split into an
/// invariant plane {∂u, ∂v}, a pointwise slant plane {∂w, ∂t} with
/// cos θ = |t−w|/√((t²+1)(w²+1)), and ξ. Degenerates at w = t and at
/// vanishing w or t, hence the exclusions.
fn example1() -> Result<CatalogEntry> {
    let ambient = AmbientStructure::euclidean_acm(3);
    let immersion = Immersion::new(
        &["u", "v", "w", "t", "z"],
        &[
            "u+v", "-u+v", "t*cos(w)", "t*sin(w)", "w*cos(t)", "w*sin(t)", "z",
        ],
        &[
            (-1.0, 1.0),
            (-1.0, 1.0),
            (0.5, 2.5),
            (0.5, 2.5),
            (-1.0, 1.0),
        ],
        &["w-t", "w", "t"],
    )?;
    let split = SplitSpec::from_strs(
        &[
            &["1", "0", "0", "0", "0"],
            &["0", "1", "0", "0", "0"],
        ],
        &[
            &["0", "0", "1", "0", "0"],
            &["0", "0", "0", "1", "0"],
        ],
        &["0", "0", "0", "0", "1"],
    );
    Ok(CatalogEntry {
        name: "example1",
        description: describe("example1"),
        ambient,
        immersion,
        split: Some(split),
        warp: None,
    })
}

/// χ(u,v,z) = (u, v, 0, 0, z) in the standard structure on R^5. The
/// η-horizontal part of the tangent space needs the point-dependent
/// direction ∂u + v∂z because the invariant distribution of a Sasakian
/// structure is never integrable.
fn invariant_r5() -> Result<CatalogEntry> {
    let ambient = AmbientStructure::standard_sasakian(2)?;
    let immersion = Immersion::new(
        &["u", "v", "z"],
        &["u", "v", "0", "0", "z"],
        &[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)],
        &[],
    )?;
    let split = SplitSpec::from_strs(
        &[&["1", "0", "v"], &["0", "1", "0"]],
        &[],
        &["0", "0", "2"],
    );
    Ok(CatalogEntry {
        name: "invariant_r5",
        description: describe("invariant_r5"),
        ambient,
        immersion,
        split: Some(split),
        warp: None,
    })
}

/// χ(u,v,s,z) = (0, 0, u cos s, v cos s, u sin s, v sin s, z) in the
/// standard structure on R^7: a warped product with invariant base
/// spanned by {∂u + v∂z, ∂v, ξ}, anti-invariant circle fiber ∂s, and
/// warping f = ½√(u²+v²) (so ∇ln f = (u, v)/(u²+v²) on the base).
fn cr_warped_r7() -> Result<CatalogEntry> {
    let ambient = AmbientStructure::standard_sasakian(3)?;
    let immersion = Immersion::new(
        &["u", "v", "s", "z"],
        &[
            "0",
            "0",
            "u*cos(s)",
            "v*cos(s)",
            "u*sin(s)",
            "v*sin(s)",
            "z",
        ],
        &[(1.0, 2.0), (0.5, 1.5), (0.1, 1.2), (-1.0, 1.0)],
        &[],
    )?;
    let split = SplitSpec::from_strs(
        &[&["1", "0", "0", "v"], &["0", "1", "0", "0"]],
        &[&["0", "0", "1", "0"]],
        &["0", "0", "0", "2"],
    );
    let warp = WarpSpec {
        base_vars: vec![0, 1, 3],
        fiber_vars: vec![2],
        reference_point: vec![1.5, 1.0, 0.65, 0.0],
    };
    Ok(CatalogEntry {
        name: "cr_warped_r7",
        description: describe("cr_warped_r7"),
        ambient,
        immersion,
        split: Some(split),
        warp: Some(warp),
    })
}

/// Constant-warping variant of the CR product: invariant (x₁, y₁)-plane
/// base, unit anti-invariant circle fiber in the x₂/x₃ directions.
fn cr_product_r7() -> Result<CatalogEntry> {
    let ambient = AmbientStructure::standard_sasakian(3)?;
    let immersion = Immersion::new(
        &["u", "v", "s", "z"],
        &["u", "v", "cos(s)", "0", "sin(s)", "0", "z"],
        &[(-1.0, 1.0), (-1.0, 1.0), (0.1, 1.2), (-1.0, 1.0)],
        &[],
    )?;
    let split = SplitSpec::from_strs(
        &[&["1", "0", "0", "v"], &["0", "1", "0", "0"]],
        &[&["0", "0", "1", "0"]],
        &["0", "0", "0", "2"],
    );
    let warp = WarpSpec {
        base_vars: vec![0, 1, 3],
        fiber_vars: vec![2],
        reference_point: vec![0.0, 0.0, 0.65, 0.0],
    };
    Ok(CatalogEntry {
        name: "cr_product_r7",
        description: describe("cr_product_r7"),
        ambient,
        immersion,
        split: Some(split),
        warp: Some(warp),
    })
}

/// χ(u,s,t) = (u, e^u ω(s,t), 0) with ω the unit sphere chart
/// (sin s cos t, sin s sin t, cos s), in flat R^5: induced metric
/// (1+e^{2u})du² + e^{2u}(ds² + sin²s dt²), a planted warped metric with
/// f = e^u. ξ is normal here; only the warp suites apply.
fn warp_surface_r5() -> Result<CatalogEntry> {
    let ambient = AmbientStructure::euclidean_acm(2);
    let immersion = Immersion::new(
        &["u", "s", "t"],
        &[
            "u",
            "exp(u)*sin(s)*cos(t)",
            "exp(u)*sin(s)*sin(t)",
            "exp(u)*cos(s)",
            "0",
        ],
        &[(-0.5, 0.5), (0.4, 1.2), (0.0, 1.0)],
        &[],
    )?;
    let warp = WarpSpec {
        base_vars: vec![0],
        fiber_vars: vec![1, 2],
        reference_point: vec![0.0, 0.8, 0.5],
    };
    Ok(CatalogEntry {
        name: "warp_surface_r5",
        description: describe("warp_surface_r5"),
        ambient,
        immersion,
        split: None,
        warp: Some(warp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_names_resolve() {
        for name in NAMES {
            let e = catalog(name).unwrap();
            assert_eq!(e.name, name);
            assert_eq!(e.immersion.ambient_dim(), e.ambient.dim());
        }
    }

    #[test]
    fn unknown_name_is_an_error() {
        assert!(matches!(
            catalog("nope"),
            Err(GeomError::UnknownCatalogEntry { .. })
        ));
    }

    #[test]
    fn surface_components_are_verbatim() {
        let e = catalog("example1").unwrap();
        assert_eq!(e.immersion.component_srcs[2], "t*cos(w)");
        assert!(e.immersion.exclusion_srcs.contains(&"w-t".to_string()));
    }

    #[test]
    fn descriptions_are_stable_and_complete() {
        let d = descriptions();
        assert_eq!(d.len(), NAMES.len());
        assert_eq!(d[0].0, "example1");
        assert!(d.iter().all(|(_, desc)| !desc.is_empty()));
    }
}
