//! Exact discrete transport by successive shortest paths, used as an oracle.
#![allow(dead_code)]

/// Minimal cost of moving `supply` onto `demand` (equal totals) with ground
/// cost `cost(i, j)`.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: impl Fn(usize, usize) -> f64) -> f64 {
    let (n, m) = (supply.len(), demand.len());
    let c: Vec<f64> = (0..n * m).map(|k| cost(k / m, k % m)).collect();
    let mut flow = vec![0.0; n * m];
    let mut sup = supply.to_vec();
    let mut dem = demand.to_vec();
    let total: f64 = supply.iter().sum();
    let eps = 1e-15 * total.max(1.0);

    // node potentials: supplies 0..n, demands n..n+m
    let mut pot = vec![0.0; n + m];
    loop {
        if sup.iter().all(|s| *s <= eps) || dem.iter().all(|d| *d <= eps) {
            break;
        }
        // dense Dijkstra from all supplies with remaining mass
        let mut dist = vec![f64::INFINITY; n + m];
        let mut prev = vec![usize::MAX; n + m];
        let mut done = vec![false; n + m];
        for i in 0..n {
            if sup[i] > eps {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut v = usize::MAX;
            let mut best = f64::INFINITY;
            for k in 0..n + m {
                if !done[k] && dist[k] < best {
                    best = dist[k];
                    v = k;
                }
            }
            if v == usize::MAX {
                break;
            }
            done[v] = true;
            if v < n {
                for j in 0..m {
                    let w = n + j;
                    let d = best + c[v * m + j] + pot[v] - pot[w];
                    if !done[w] && d < dist[w] {
                        dist[w] = d;
                        prev[w] = v;
                    }
                }
            } else {
                let j = v - n;
                for i in 0..n {
                    if flow[i * m + j] > eps {
                        let d = best - c[i * m + j] + pot[v] - pot[i];
                        if !done[i] && d < dist[i] {
                            dist[i] = d;
                            prev[i] = v;
                        }
                    }
                }
            }
        }
        // cheapest reachable demand with remaining capacity
        let target = (0..m)
            .filter(|&j| dem[j] > eps && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].partial_cmp(&dist[n + b]).unwrap())
            .expect("unbalanced transport problem");
        let cap = dist[n + target];
        for k in 0..n + m {
            pot[k] += dist[k].min(cap);
        }
        // bottleneck along the path
        let mut amount = dem[target];
        let mut v = n + target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= n {
                amount = amount.min(flow[v * m + (u - n)]);
            }
            v = u;
        }
        amount = amount.min(sup[v]);
        let source = v;
        let mut v = n + target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < n {
                flow[u * m + (v - n)] += amount;
            } else {
                flow[v * m + (u - n)] -= amount;
            }
            v = u;
        }
        sup[source] -= amount;
        dem[target] -= amount;
    }
    flow.iter().zip(&c).map(|(f, c)| f * c).sum()
}

pub fn circle_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).abs() % period;
    d.min(period - d)
}
