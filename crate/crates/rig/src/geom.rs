pub(crate) type V3 = [f64; 3];

pub(crate) fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn unit(a: V3) -> V3 {
    scale(a, 1.0 / norm(a))
}

pub(crate) fn dist(a: V3, b: V3) -> f64 {
    norm(sub(a, b))
}

/// Two-segment chain from `root` toward `target` with segment lengths `l1`
/// and `l2`. The middle joint bends toward `pole`. When the target is out of
/// reach the chain is stretched (or folded) along the target direction, so
/// segment lengths are always exact. Returns (middle, end).
pub(crate) fn two_bone_ik(root: V3, target: V3, l1: f64, l2: f64, pole: V3) -> (V3, V3) {
    let to = sub(target, root);
    let d_raw = norm(to);
    let axis = if d_raw > 1e-12 { scale(to, 1.0 / d_raw) } else { unit(pole) };
    let lo = (l1 - l2).abs() + 1e-9;
    let hi = l1 + l2 - 1e-9;
    let d = d_raw.clamp(lo, hi);
    let end = add(root, scale(axis, d));
    // Law of cosines for the distance along the axis to the middle joint.
    let a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
    let h = (l1 * l1 - a * a).max(0.0).sqrt();
    let pole_perp = sub(pole, scale(axis, dot(pole, axis)));
    let bend = if norm(pole_perp) > 1e-12 {
        unit(pole_perp)
    } else {
        // Any perpendicular will do.
        let helper = if axis[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
        unit(cross(axis, helper))
    };
    let mid = add(add(root, scale(axis, a)), scale(bend, h));
    (mid, end)
}
