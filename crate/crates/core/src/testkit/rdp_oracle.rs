//! Subsampled-Gaussian RDP values computed offline.

/// `(q, σ, α, ε(α))` from direct 60-digit summation of the binomial series.
pub const ORACLE_GRID: &[(f64, f64, u32, f64)] = &[
    (0.001, 0.5, 2, 0.000053596713703623592226),
    (0.001, 0.5, 8, 8.1054225390955561233),
    (0.001, 0.5, 32, 56.869413905566826269),
    (0.001, 0.5, 64, 120.9825978118276703),
    (0.001, 0.5, 256, 505.0651554846296977),
    (0.001, 1.0, 2, 1.7182803522145152983e-6),
    (0.001, 1.0, 8, 6.9879416490941468168e-6),
    (0.001, 1.0, 32, 8.8694139056023259812),
    (0.001, 1.0, 64, 24.982597811827670296),
    (0.001, 1.0, 256, 121.0651554846296977),
    (0.001, 2.0, 2, 2.8402537635253045923e-7),
    (0.001, 2.0, 8, 1.1382237177147440606e-6),
    (0.001, 2.0, 32, 4.5873148985516595984e-6),
    (0.001, 2.0, 64, 0.98274463596303861829),
    (0.001, 2.0, 256, 25.065155484629697705),
    (0.001, 5.0, 2, 4.0810773359628604323e-8),
    (0.001, 5.0, 8, 1.6328358096960556542e-7),
    (0.001, 5.0, 32, 6.5378320899264216992e-7),
    (0.001, 5.0, 64, 1.3093021994366716604e-6),
    (0.001, 5.0, 256, 5.2793966565790240972e-6),
    (0.001, 20.0, 2, 2.5031276026622610744e-9),
    (0.001, 20.0, 8, 1.0012660763799237871e-8),
    (0.001, 20.0, 32, 4.0053048946556748438e-8),
    (0.001, 20.0, 64, 8.0112514803126330473e-8),
    (0.001, 20.0, 256, 3.2060418033785671174e-7),
    (0.01, 0.5, 2, 0.005345502314345255287),
    (0.01, 0.5, 8, 10.736948358948984222),
    (0.01, 0.5, 32, 59.246275937044550846),
    (0.01, 0.5, 64, 123.3217318745517802),
    (0.01, 0.5, 256, 507.37677032308646514),
    (0.01, 1.0, 2, 0.00017181342207454793099),
    (0.01, 1.0, 8, 0.00089364390760603184735),
    (0.01, 1.0, 32, 11.246275937048068835),
    (0.01, 1.0, 64, 27.321731874551780198),
    (0.01, 1.0, 256, 123.37677032308646514),
    (0.01, 2.0, 2, 0.000028402138324224847351),
    (0.01, 2.0, 8, 0.0001157561479299103125),
    (0.01, 2.0, 32, 0.00050289464686279095194),
    (0.01, 2.0, 64, 3.3217464086810074397),
    (0.01, 2.0, 256, 27.376770323086465136),
    (0.01, 5.0, 2, 4.0810690916650287397e-6),
    (0.01, 5.0, 8, 0.000016364503183045828629),
    (0.01, 5.0, 32, 0.000066112483669482477007),
    (0.01, 5.0, 64, 0.00013402647473733524679),
    (0.01, 5.0, 256, 0.50053089735239475119),
    (0.01, 20.0, 2, 2.503127292512746709e-7),
    (0.01, 20.0, 8, 1.0013999387494873545e-6),
    (0.01, 20.0, 32, 4.0079864666478062006e-6),
    (0.01, 20.0, 64, 8.0223492921365255357e-6),
    (0.01, 20.0, 256, 0.000032243573022247825788),
    (0.05, 0.5, 2, 0.12574712688706775088),
    (0.05, 0.5, 8, 12.576305973096167276),
    (0.05, 0.5, 32, 60.907631201492654458),
    (0.05, 0.5, 64, 124.95671642051658058),
    (0.05, 0.5, 256, 508.99251975674579728),
    (0.05, 1.0, 2, 0.0042865043704189774702),
    (0.05, 1.0, 8, 0.6012689139892540642),
    (0.05, 1.0, 32, 12.907631201493329628),
    (0.05, 1.0, 64, 28.956716420516580578),
    (0.05, 1.0, 256, 124.99251975674579728),
    (0.05, 2.0, 2, 0.00070981156587489923969),
    (0.05, 2.0, 8, 0.0031215266423009265811),
    (0.05, 2.0, 32, 0.91636960956157446667),
    (0.05, 2.0, 64, 4.9567192096224996791),
    (0.05, 2.0, 256, 28.992519756745797277),
    (0.05, 5.0, 2, 0.00010202173108717797139),
    (0.05, 5.0, 8, 0.00041296394134598509589),
    (0.05, 5.0, 32, 0.0017366166869618551394),
    (0.05, 5.0, 64, 0.0037409171278277707631),
    (0.05, 5.0, 256, 2.1132311333671092807),
    (0.05, 20.0, 2, 6.257799434419989032e-6),
    (0.05, 20.0, 8, 0.000025049084193210026705),
    (0.05, 20.0, 32, 0.00010048387246875815972),
    (0.05, 20.0, 64, 0.0002017413158490736176),
    (0.05, 20.0, 256, 0.00082621582799952077063),
    (0.2, 0.5, 2, 1.1454723378159810923),
    (0.2, 0.5, 8, 14.160642385792760441),
    (0.2, 0.5, 32, 62.338644735551896388),
    (0.2, 0.5, 64, 126.36501545403519962),
    (0.2, 0.5, 256, 510.38425056634066786),
    (0.2, 1.0, 2, 0.066472218905597266678),
    (0.2, 1.0, 8, 2.1649002382774241518),
    (0.2, 1.0, 32, 14.338644735552038528),
    (0.2, 1.0, 64, 30.365015454035199619),
    (0.2, 1.0, 256, 126.38425056634066786),
    (0.2, 2.0, 2, 0.011296964989239869534),
    (0.2, 2.0, 8, 0.064951951532038957399),
    (0.2, 2.0, 32, 2.340435419533368905),
    (0.2, 2.0, 64, 6.3650160412046425019),
    (0.2, 2.0, 256, 30.384250566340667859),
    (0.2, 5.0, 2, 0.0016311000005411766869),
    (0.2, 5.0, 8, 0.0067945183652243394032),
    (0.2, 5.0, 32, 0.032995062946601119641),
    (0.2, 5.0, 64, 0.10136705462043201466),
    (0.2, 5.0, 256, 3.5043999352077542406),
    (0.2, 20.0, 2, 0.00010012009204811550232),
    (0.2, 20.0, 8, 0.00040144589796853745591),
    (0.2, 20.0, 32, 0.0016214682420404220974),
    (0.2, 20.0, 64, 0.0032859805016144767394),
    (0.2, 20.0, 256, 0.014313319405546436266),
    (0.5, 0.5, 2, 2.6671960885860428894),
    (0.5, 0.5, 8, 15.207831793646567006),
    (0.5, 0.5, 32, 63.284493232970379035),
    (0.5, 0.5, 64, 127.29585048324069048),
    (0.5, 0.5, 256, 511.30413459520256471),
    (0.5, 1.0, 2, 0.35737401950878853731),
    (0.5, 1.0, 8, 3.2088792609697944134),
    (0.5, 1.0, 32, 15.284493232970414571),
    (0.5, 1.0, 64, 31.295850483240690479),
    (0.5, 1.0, 256, 127.30413459520256471),
    (0.5, 2.0, 2, 0.068598724381658406416),
    (0.5, 2.0, 8, 0.42374833315045390863),
    (0.5, 2.0, 32, 3.2849386205373292319),
    (0.5, 2.0, 64, 7.2958506300325136949),
    (0.5, 2.0, 256, 31.304134595202564709),
    (0.5, 5.0, 2, 0.010150997399574097832),
    (0.5, 5.0, 8, 0.043213634258014993997),
    (0.5, 5.0, 32, 0.22939314056080458878),
    (0.5, 5.0, 64, 0.66339328189197000616),
    (0.5, 5.0, 256, 4.4241719178133229732),
    (0.5, 20.0, 2, 0.00062558618160238263411),
    (0.5, 20.0, 8, 0.0025117687037136118992),
    (0.5, 20.0, 32, 0.010200727084543268511),
    (0.5, 20.0, 64, 0.020825934373105857983),
    (0.5, 20.0, 256, 0.095086666670106546463),
    (1.0, 0.5, 2, 4.0),
    (1.0, 0.5, 8, 16.0),
    (1.0, 0.5, 32, 64.0),
    (1.0, 0.5, 64, 128.0),
    (1.0, 0.5, 256, 512.0),
    (1.0, 1.0, 2, 1.0),
    (1.0, 1.0, 8, 4.0),
    (1.0, 1.0, 32, 16.0),
    (1.0, 1.0, 64, 32.0),
    (1.0, 1.0, 256, 128.0),
    (1.0, 2.0, 2, 0.25),
    (1.0, 2.0, 8, 1.0),
    (1.0, 2.0, 32, 4.0),
    (1.0, 2.0, 64, 8.0),
    (1.0, 2.0, 256, 32.0),
    (1.0, 5.0, 2, 0.04),
    (1.0, 5.0, 8, 0.16),
    (1.0, 5.0, 32, 0.64),
    (1.0, 5.0, 64, 1.28),
    (1.0, 5.0, 256, 5.12),
    (1.0, 20.0, 2, 0.0025),
    (1.0, 20.0, 8, 0.01),
    (1.0, 20.0, 32, 0.04),
    (1.0, 20.0, 64, 0.08),
    (1.0, 20.0, 256, 0.32),
];
