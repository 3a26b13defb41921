use poseguard::nn::{LayerSpec, Network, NetworkSpec, Tensor};
use std::time::Instant;

#[test]
fn micro() {
    // conv 16->16 3x3 @ 64x128: 18.9M MACs
    let net = Network::build(&NetworkSpec {
        input_shape: vec![16, 64, 128],
        layers: vec![LayerSpec::Conv { in_ch: 16, out_ch: 16, kernel: 3, stride: 1, padding: 1 }],
        init_seed: 1,
    }).unwrap();
    let x = Tensor::from_vec(&[16, 64, 128], (0..16*64*128).map(|i| (i as f64 * 0.001).sin()).collect()).unwrap();
    let _ = net.infer(&x).unwrap();
    let t = Instant::now();
    let n = 20;
    for _ in 0..n { let _ = net.infer(&x).unwrap(); }
    let per = t.elapsed().as_secs_f64() / n as f64;
    let macs = 64.0*128.0*16.0*16.0*9.0;
    println!("conv fwd: {:.2} ms = {:.2} GFLOP/s", per*1000.0, macs*2.0/per/1e9);

    let trace = net.forward(&x).unwrap();
    let g = Tensor::from_vec(trace.output.shape(), vec![0.5; trace.output.len()]).unwrap();
    let t = Instant::now();
    for _ in 0..n { let _ = net.backward(&trace, &g).unwrap(); }
    let per = t.elapsed().as_secs_f64() / n as f64;
    println!("conv bwd: {:.2} ms = {:.2} GFLOP/s", per*1000.0, macs*2.0*2.0/per/1e9);
    panic!("probe");
}
