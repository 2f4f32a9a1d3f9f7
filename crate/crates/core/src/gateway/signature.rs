//! Signatures of transformed problems, derived mechanically from the
//! original signature.

use crate::problem::{FunctionSignature, Param};
use crate::types::TypeTag;

use super::GatewayError;

const INV_SUFFIX: &str = "_inv";

fn toggle_inverse_name(name: &str) -> String {
    match name.strip_suffix(INV_SUFFIX) {
        Some(base) => base.to_string(),
        None => format!("{name}{INV_SUFFIX}"),
    }
}

fn incompatible(kind: &str, reason: impl Into<String>) -> GatewayError {
    GatewayError::Incompatible { kind: kind.to_string(), reason: reason.into() }
}

/// Swaps parameter `arg` with the return value. Applying it twice with the
/// same index gives back the original signature.
pub fn partial_inverse(sig: &FunctionSignature, arg: usize) -> Result<FunctionSignature, GatewayError> {
    sig.check_arg(arg).map_err(|e| incompatible("partial-inverse", e.to_string()))?;
    let swapped = &sig.params[arg];
    let mut params = sig.params.clone();
    params[arg] = Param::new(sig.result_name.clone(), sig.returns.clone());
    let out = FunctionSignature {
        name: toggle_inverse_name(&sig.name),
        params,
        returns: swapped.ty.clone(),
        result_name: swapped.name.clone(),
    };
    out.validate().map_err(|e| incompatible("partial-inverse", e.to_string()))?;
    Ok(out)
}

pub fn inverse(sig: &FunctionSignature) -> Result<FunctionSignature, GatewayError> {
    if sig.arity() != 1 {
        return Err(incompatible("inverse", format!("{} takes {} parameters", sig.name, sig.arity())));
    }
    partial_inverse(sig, 0)
}

/// All values of parameter `arg` producing a given output. A `None`
/// return carries no information and is dropped from the parameters.
pub fn set_valued_inverse(sig: &FunctionSignature, arg: usize) -> Result<FunctionSignature, GatewayError> {
    sig.check_arg(arg).map_err(|e| incompatible("set-valued-inverse", e.to_string()))?;
    let target = &sig.params[arg];
    let mut params = sig.params.clone();
    if sig.returns == TypeTag::NoneType {
        params.remove(arg);
    } else {
        params[arg] = Param::new(sig.result_name.clone(), sig.returns.clone());
    }
    if params.is_empty() {
        return Err(incompatible("set-valued-inverse", "no parameters left"));
    }
    Ok(FunctionSignature {
        name: format!("{}_all_{}", sig.name, target.name),
        params,
        returns: TypeTag::set(target.ty.clone()),
        result_name: format!("all_{}", target.name),
    })
}

pub fn enumeration(sig: &FunctionSignature) -> FunctionSignature {
    FunctionSignature {
        name: format!("{}_all", sig.name),
        params: sig.params.clone(),
        returns: TypeTag::set(sig.returns.clone()),
        result_name: format!("all_{}", sig.result_name),
    }
}

/// `list[X] -> list[Y]` becomes `X -> Y`.
pub fn pointwise(sig: &FunctionSignature) -> Result<FunctionSignature, GatewayError> {
    match (sig.params.as_slice(), &sig.returns) {
        ([p], TypeTag::List(out)) => match &p.ty {
            TypeTag::List(inp) => Ok(FunctionSignature {
                name: format!("{}_one", sig.name),
                params: vec![Param::new(p.name.clone(), (**inp).clone())],
                returns: (**out).clone(),
                result_name: sig.result_name.clone(),
            }),
            other => Err(incompatible("pointwise", format!("parameter type {other} is not a list"))),
        },
        _ => Err(incompatible("pointwise", "expected list[X] -> list[Y]")),
    }
}

/// One branch per disjunct of a union return type, tagged by the
/// disjunct's constructor.
pub fn union_split(sig: &FunctionSignature) -> Result<Vec<(String, FunctionSignature)>, GatewayError> {
    let TypeTag::Union(parts) = &sig.returns else {
        return Err(incompatible("union-split", format!("return type {} is not a union", sig.returns)));
    };
    let mut tags: Vec<&str> = parts.iter().map(TypeTag::constructor_tag).collect();
    tags.sort_unstable();
    tags.dedup();
    if tags.len() != parts.len() {
        return Err(incompatible("union-split", "two disjuncts share a constructor"));
    }
    Ok(parts
        .iter()
        .map(|t| {
            let tag = t.constructor_tag().to_string();
            let branch = FunctionSignature {
                name: format!("{}_{tag}", sig.name),
                params: sig.params.clone(),
                returns: t.clone(),
                result_name: sig.result_name.clone(),
            };
            (tag, branch)
        })
        .collect())
}
