//! Reader for the subset of the MATPOWER version-2 case format used here:
//! `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch` and `mpc.gencost`.
//! Every other statement is ignored.

use std::collections::HashMap;

use super::{Branch, Bus, BusId, BusKind, CaseError, Generator, NetworkCase, Slack};

// bus columns
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const QD: usize = 3;
const VMAX: usize = 11;
const VMIN: usize = 12;
// gen columns
const GEN_BUS: usize = 0;
const QMAX: usize = 3;
const QMIN: usize = 4;
const VG: usize = 5;
const GEN_STATUS: usize = 7;
const PMAX: usize = 8;
const PMIN: usize = 9;
// branch columns
const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const RATE_A: usize = 5;
const BR_STATUS: usize = 10;

struct Row {
    line: usize,
    values: Vec<f64>,
}

struct Block {
    line: usize,
    rows: Vec<Row>,
}

pub fn parse_matpower_case(text: &str) -> Result<NetworkCase, CaseError> {
    let (base_mva, blocks) = scan(text)?;
    let last_line = text.lines().count();
    let missing = |name: &str| CaseError::Parse {
        line: last_line,
        msg: format!("missing mpc.{name} block"),
    };
    let base_mva = base_mva.ok_or_else(|| missing("baseMVA"))?;
    let bus_block = blocks.get("bus").ok_or_else(|| missing("bus"))?;
    let gen_block = blocks.get("gen").ok_or_else(|| missing("gen"))?;
    let branch_block = blocks.get("branch").ok_or_else(|| missing("branch"))?;
    check_width(bus_block, "bus", VMIN + 1)?;
    check_width(gen_block, "gen", PMIN + 1)?;
    check_width(branch_block, "branch", BR_STATUS + 1)?;

    let costs = match blocks.get("gencost") {
        Some(block) => linear_costs(block, gen_block.rows.len())?,
        None => vec![0.0; gen_block.rows.len()],
    };

    let mut gens_at: HashMap<BusId, (usize, &Row)> = HashMap::new();
    for (k, row) in gen_block.rows.iter().enumerate() {
        if row.values[GEN_STATUS] <= 0.0 {
            continue;
        }
        let bus = bus_id(row, GEN_BUS)?;
        if gens_at.insert(bus, (k, row)).is_some() {
            return Err(CaseError::Parse {
                line: row.line,
                msg: format!("second in-service generator at bus {bus}"),
            });
        }
    }

    let mut buses = Vec::with_capacity(bus_block.rows.len());
    let mut generators = Vec::new();
    let mut slack = None;
    for row in &bus_block.rows {
        let v = &row.values;
        let id = bus_id(row, BUS_I)?;
        let kind = match v[BUS_TYPE] as i64 {
            3 => BusKind::Slack,
            1 | 2 if gens_at.contains_key(&id) => BusKind::Generator,
            1 | 2 => BusKind::Load,
            t => {
                return Err(CaseError::Parse {
                    line: row.line,
                    msg: format!("bus {id} has unsupported type {t}"),
                })
            }
        };
        let gen = gens_at.get(&id);
        match kind {
            BusKind::Slack => {
                let (k, g) = gen.ok_or_else(|| CaseError::Parse {
                    line: row.line,
                    msg: format!("slack bus {id} has no in-service generator"),
                })?;
                let gv = &g.values;
                slack = Some(Slack {
                    bus: id,
                    v0: gv[VG] * gv[VG],
                    p_min: gv[PMIN] / base_mva,
                    p_max: gv[PMAX] / base_mva,
                    q_min: gv[QMIN] / base_mva,
                    q_max: gv[QMAX] / base_mva,
                    cost: costs[*k] * base_mva,
                });
            }
            BusKind::Generator => {
                let (k, g) = gen.expect("generator buses have a generator");
                let gv = &g.values;
                generators.push(Generator {
                    bus: id,
                    p_min: gv[PMIN] / base_mva,
                    p_max: gv[PMAX] / base_mva,
                    q_min: gv[QMIN] / base_mva,
                    q_max: gv[QMAX] / base_mva,
                    cost: costs[*k] * base_mva,
                });
            }
            BusKind::Load => {}
        }
        buses.push(Bus {
            id,
            kind,
            v_min: v[VMIN] * v[VMIN],
            v_max: v[VMAX] * v[VMAX],
            p_demand: v[PD] / base_mva,
            q_demand: v[QD] / base_mva,
        });
    }
    let slack = slack.ok_or_else(|| CaseError::Parse {
        line: bus_block.line,
        msg: "no bus of type 3 (slack)".into(),
    })?;

    let mut branches = Vec::new();
    for (k, row) in branch_block.rows.iter().enumerate() {
        let v = &row.values;
        if v[BR_STATUS] <= 0.0 {
            continue;
        }
        branches.push(Branch {
            id: k + 1,
            from_bus: bus_id(row, F_BUS)?,
            to_bus: bus_id(row, T_BUS)?,
            r: v[BR_R],
            x: v[BR_X],
            f_max: (v[RATE_A] != 0.0).then(|| v[RATE_A] / base_mva),
        });
    }

    let case = NetworkCase {
        base_mva,
        slack,
        buses,
        branches,
        generators,
    };
    case.validate()?;
    Ok(case)
}

fn bus_id(row: &Row, col: usize) -> Result<BusId, CaseError> {
    let v = row.values[col];
    if v < 0.0 || v.fract() != 0.0 {
        return Err(CaseError::Parse {
            line: row.line,
            msg: format!("bus number {v} is not a nonnegative integer"),
        });
    }
    Ok(v as BusId)
}

fn check_width(block: &Block, name: &str, min: usize) -> Result<(), CaseError> {
    for row in &block.rows {
        if row.values.len() < min {
            return Err(CaseError::Parse {
                line: row.line,
                msg: format!("mpc.{name} row has {} columns, need at least {min}", row.values.len()),
            });
        }
    }
    Ok(())
}

/// Linear coefficient of each polynomial cost row, in $/MWh.
fn linear_costs(block: &Block, n_gen: usize) -> Result<Vec<f64>, CaseError> {
    if block.rows.len() < n_gen {
        return Err(CaseError::Parse {
            line: block.line,
            msg: format!("mpc.gencost has {} rows for {n_gen} generators", block.rows.len()),
        });
    }
    let mut out = Vec::with_capacity(n_gen);
    for row in &block.rows[..n_gen] {
        let v = &row.values;
        let err = |msg: String| CaseError::Parse { line: row.line, msg };
        if v.len() < 4 {
            return Err(err("gencost row needs MODEL, STARTUP, SHUTDOWN, NCOST".into()));
        }
        if v[0] != 2.0 {
            return Err(err("only polynomial (model 2) costs are supported".into()));
        }
        let ncost = v[3] as usize;
        if v.len() < 4 + ncost {
            return Err(err(format!(
                "gencost row declares {ncost} coefficients but has {}",
                v.len() - 4
            )));
        }
        // highest order first: c_{n-1} ... c_1 c_0
        let coeffs = &v[4..4 + ncost];
        if let Some(pos) = coeffs[..ncost.saturating_sub(2)].iter().position(|c| *c != 0.0) {
            return Err(err(format!(
                "nonzero cost term of order {}; only linear costs are supported",
                ncost - 1 - pos
            )));
        }
        out.push(if ncost >= 2 { coeffs[ncost - 2] } else { 0.0 });
    }
    Ok(out)
}

fn scan(text: &str) -> Result<(Option<f64>, HashMap<String, Block>), CaseError> {
    let mut base_mva = None;
    let mut blocks = HashMap::new();
    let mut current: Option<(String, Block)> = None;
    let mut pending: Vec<f64> = Vec::new();
    let mut pending_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let code = raw.split('%').next().unwrap_or("");
        if let Some((_, block)) = current.as_mut() {
            let (body, closed) = match code.find(']') {
                Some(pos) => (&code[..pos], true),
                None => (code, false),
            };
            for (i, piece) in body.split(';').enumerate() {
                if i > 0 {
                    flush(&mut pending, pending_line, block);
                }
                for tok in piece
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                {
                    let v = parse_number(tok).ok_or_else(|| CaseError::Parse {
                        line,
                        msg: format!("expected a number, found `{tok}`"),
                    })?;
                    if pending.is_empty() {
                        pending_line = line;
                    }
                    pending.push(v);
                }
            }
            // a newline also ends a row
            flush(&mut pending, pending_line, block);
            if closed {
                let (name, block) = current.take().expect("inside a block");
                blocks.insert(name, block);
            }
            continue;
        }

        let code = code.trim();
        let Some(rest) = code.strip_prefix("mpc.") else {
            continue;
        };
        let Some((name, value)) = rest.split_once('=') else {
            continue;
        };
        let name = name.trim();
        let value = value.trim().trim_end_matches(';').trim();
        if name == "baseMVA" {
            base_mva = Some(parse_number(value).ok_or_else(|| CaseError::Parse {
                line,
                msg: format!("baseMVA is not a number: `{value}`"),
            })?);
        } else if matches!(name, "bus" | "gen" | "branch" | "gencost") {
            let Some(body) = value.strip_prefix('[') else {
                return Err(CaseError::Parse {
                    line,
                    msg: format!("mpc.{name} must be a matrix literal"),
                });
            };
            let mut block = Block { line, rows: Vec::new() };
            // data may start on the opening line
            if !body.trim().is_empty() {
                let inline = body.split(']').next().unwrap_or("");
                for piece in inline.split(';') {
                    for tok in piece
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|t| !t.is_empty())
                    {
                        pending.push(parse_number(tok).ok_or_else(|| CaseError::Parse {
                            line,
                            msg: format!("expected a number, found `{tok}`"),
                        })?);
                        pending_line = line;
                    }
                    flush(&mut pending, pending_line, &mut block);
                }
                if body.contains(']') {
                    blocks.insert(name.to_string(), block);
                    continue;
                }
            }
            current = Some((name.to_string(), block));
        }
    }
    if let Some((name, block)) = current {
        return Err(CaseError::Parse {
            line: block.line,
            msg: format!("mpc.{name} block is never closed"),
        });
    }
    Ok((base_mva, blocks))
}

fn flush(pending: &mut Vec<f64>, line: usize, block: &mut Block) {
    if !pending.is_empty() {
        block.rows.push(Row {
            line,
            values: std::mem::take(pending),
        });
    }
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse().ok().filter(|v: &f64| v.is_finite()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	12.5	1	1	1;
	2	1	50	10	0	0	1	1	0	12.5	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1	100	1	200	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.01	0.02	0	0	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0	20	0;
];
";

    #[test]
    fn parses_two_bus_case() {
        let case = parse_matpower_case(TWO_BUS).unwrap();
        assert_eq!(case.base_mva, 100.0);
        assert_eq!(case.slack.bus, 1);
        assert_eq!(case.slack.cost, 2000.0);
        assert_eq!(case.slack.p_max, 2.0);
        assert_eq!(case.buses[1].p_demand, 0.5);
        assert!((case.buses[1].v_max - 1.21).abs() < 1e-15);
        assert_eq!(case.branches[0].f_max, None);
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let text = TWO_BUS.replace("2	1	50	10", "2	1	5x0	10");
        match parse_matpower_case(&text) {
            Err(CaseError::Parse { line, msg }) => {
                assert_eq!(line, 6);
                assert!(msg.contains("5x0"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_row_is_rejected() {
        let text = TWO_BUS.replace("12.5	1	1.1	0.9;", ";");
        assert!(matches!(
            parse_matpower_case(&text),
            Err(CaseError::Parse { line: 6, .. })
        ));
    }

    #[test]
    fn quadratic_cost_is_rejected() {
        let text = TWO_BUS.replace("2	0	0	3	0	20	0", "2	0	0	3	0.1	20	0");
        assert!(matches!(
            parse_matpower_case(&text),
            Err(CaseError::Parse { line: 15, .. })
        ));
    }

    #[test]
    fn branch_count_must_match_bus_count() {
        let text = TWO_BUS.replace(
            "	1	2	0.01	0.02	0	0	0	0	0	0	1	-360	360;\n",
            "	1	2	0.01	0.02	0	0	0	0	0	0	1	-360	360;\n	2	1	0.01	0.02	0	0	0	0	0	0	1	-360	360;\n",
        );
        let err = parse_matpower_case(&text).unwrap_err();
        assert!(matches!(err, CaseError::Validation(_)), "{err}");
    }

    #[test]
    fn duplicate_bus_is_a_validation_error() {
        let text = TWO_BUS.replace("	2	1	50	10", "	1	1	50	10");
        let err = parse_matpower_case(&text).unwrap_err();
        assert!(matches!(err, CaseError::Validation(_)), "{err}");
    }

    #[test]
    fn rate_a_becomes_flow_limit() {
        let text = TWO_BUS.replace("0.02	0	0	0	0", "0.02	0	30	0	0");
        let case = parse_matpower_case(&text).unwrap();
        assert_eq!(case.branches[0].f_max, Some(0.3));
    }

    #[test]
    fn missing_block_is_reported() {
        let text = TWO_BUS.replace("mpc.gen = [", "mpc.gens = [");
        let err = parse_matpower_case(&text).unwrap_err();
        assert!(err.to_string().contains("mpc.gen block"), "{err}");
    }
}
